import math

import numpy as np
import pytest

from gnrr.corpus import tokenize
from gnrr.embeddings import (
    EmbeddingStore,
    cosine,
    load_embeddings,
    pseudo_encode,
    save_embeddings,
)


class TestCosine:
    def test_orthogonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)

    def test_identical(self):
        v = np.array([0.3, -2.0, 1.5])
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-9)

    def test_hand_value(self):
        got = cosine(np.array([1.0, 1.0]), np.array([1.0, 0.0]))
        assert got == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-9)
        assert got == pytest.approx(0.707107, abs=1e-6)

    def test_symmetric_and_scale_invariant(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            u = rng.standard_normal(8)
            v = rng.standard_normal(8)
            assert cosine(u, v) == pytest.approx(cosine(v, u), abs=1e-12)
            assert cosine(3.7 * u, v) == pytest.approx(cosine(u, v), abs=1e-12)
            assert -1.0 - 1e-9 <= cosine(u, v) <= 1.0 + 1e-9

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero vector"):
            cosine(np.zeros(3), np.ones(3))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            cosine(np.ones(3), np.ones(4))


class TestPseudoEncode:
    def test_deterministic(self):
        a = pseudo_encode(["graph", "neural"], 32, seed=7)
        b = pseudo_encode(["graph", "neural"], 32, seed=7)
        np.testing.assert_array_equal(a, b)

    def test_seed_changes_output(self):
        a = pseudo_encode(["graph"], 32, seed=1)
        b = pseudo_encode(["graph"], 32, seed=2)
        assert not np.allclose(a, b)

    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            tokens = [f"tok{rng.integers(100)}" for _ in range(rng.integers(1, 10))]
            vec = pseudo_encode(tokens, 16, seed=3)
            assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-9)
            assert vec.dtype == np.float64

    def test_order_insensitive(self):
        a = pseudo_encode(["x", "y", "z"], 24, seed=5)
        b = pseudo_encode(["z", "x", "y"], 24, seed=5)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_empty_tokens_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            pseudo_encode([], 16, seed=0)
        with pytest.raises(ValueError, match="empty"):
            pseudo_encode(tokenize("!!!"), 16, seed=0)

    def test_shared_tokens_mean_higher_cosine(self):
        # Overlapping texts should nearly always beat disjoint ones.
        rng = np.random.default_rng(2024)
        vocab = [f"word{i}" for i in range(200)]
        wins = 0
        trials = 100
        for _ in range(trials):
            base = list(rng.choice(vocab, size=8, replace=False))
            overlap = base[:6] + list(rng.choice(vocab[100:], size=2))
            disjoint = list(rng.choice(vocab[100:], size=8, replace=False))
            z_base = pseudo_encode(base, 64, seed=1)
            z_near = pseudo_encode(overlap, 64, seed=1)
            z_far = pseudo_encode(disjoint, 64, seed=1)
            if cosine(z_base, z_near) > cosine(z_base, z_far):
                wins += 1
        assert wins >= 95, f"only {wins}/{trials} overlap trials won"


class TestStoreAndFile:
    def _store(self, n=5, dim=8, seed=0):
        rng = np.random.default_rng(seed)
        return EmbeddingStore(
            dim=dim,
            ids=[f"d{i}" for i in range(n)],
            matrix=rng.standard_normal((n, dim)).astype(np.float32),
        )

    def test_round_trip_bit_for_bit(self, tmp_path):
        store = self._store()
        path = tmp_path / "vectors.bin"
        save_embeddings(store, path)
        back = load_embeddings(path)
        assert back.ids == store.ids
        assert back.dim == store.dim
        assert back.normalized == store.normalized
        np.testing.assert_array_equal(back.matrix, store.matrix)

    def test_normalized_flag_round_trips(self, tmp_path):
        store = self._store()
        store.normalize()
        path = tmp_path / "vectors.bin"
        save_embeddings(store, path)
        back = load_embeddings(path)
        assert back.normalized is True
        norms = np.linalg.norm(back.matrix.astype(np.float64), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)

    def test_vector_promotes_to_float64(self):
        store = self._store()
        vec = store.vector("d2")
        assert vec.dtype == np.float64
        np.testing.assert_allclose(vec, store.matrix[2].astype(np.float64))

    def test_matrix_for_respects_order(self):
        store = self._store()
        mat = store.matrix_for(["d3", "d0"])
        np.testing.assert_allclose(mat[0], store.vector("d3"))
        np.testing.assert_allclose(mat[1], store.vector("d0"))

    def test_truncated_file_rejected(self, tmp_path):
        store = self._store()
        path = tmp_path / "vectors.bin"
        save_embeddings(store, path)
        clipped = tmp_path / "clipped.bin"
        clipped.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(ValueError, match="truncated|trailing"):
            load_embeddings(clipped)

    def test_non_finite_values_rejected(self, tmp_path):
        store = self._store()
        store.matrix[1, 3] = np.inf
        path = tmp_path / "vectors.bin"
        save_embeddings(store, path)
        with pytest.raises(ValueError, match="non-finite"):
            load_embeddings(path)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            EmbeddingStore(dim=2, ids=["a", "a"], matrix=np.zeros((2, 2), np.float32))
