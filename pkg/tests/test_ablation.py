import numpy as np
import pytest

from gnrr.ablation import (
    CORRUPTION_MODES,
    AblationReport,
    AblationRow,
    ablation_report,
    corrupt_h_loc,
    corrupted_scores,
    rerank_corrupted,
)
from gnrr.corpus import Qrels
from gnrr.gnn import ModelConfig, RerankModel, make_context
from gnrr.gradcheck import random_subgraph
from gnrr.pipeline import QueryInstance


def make_instance(rng, query_id, n=9, m=4):
    sub = random_subgraph(rng, n)
    for i, doc_id in enumerate(sub.doc_ids):
        sub.doc_ids[i] = f"{query_id}-{doc_id}"
    ctx = make_context(sub)
    x = rng.standard_normal((n, m))
    rank_col = 1.0 - np.arange(n) / max(n - 1, 1)
    x_aug = np.hstack([x, rank_col[:, None]])
    grades = np.zeros(n)
    relevant = rng.choice(n, size=3, replace=False)
    grades[relevant] = rng.integers(1, 4, size=3)
    grades[relevant[0]] = 2  # at least one strictly relevant doc
    return QueryInstance(
        query_id=query_id,
        sub=sub,
        x=x,
        x_aug=x_aug,
        ctx=ctx,
        grades=grades,
        ideal_grades=sorted((int(g) for g in grades if g > 0), reverse=True),
    )


def qrels_for(instances):
    judgments = {}
    for instance in instances:
        for doc_id, grade in zip(instance.doc_ids, instance.grades):
            if grade > 0:
                judgments[(instance.query_id, doc_id)] = int(grade)
    return Qrels(judgments=judgments)


def small_model(seed=0):
    return RerankModel(
        ModelConfig(kind="gcn", feature_dim=4, layers=2, hidden_dim=4, scorer_hidden=4, seed=seed)
    )


class TestCorruptHLoc:
    def test_zero_mode(self):
        h = np.arange(12.0).reshape(4, 3)
        out = corrupt_h_loc(h, "zero")
        np.testing.assert_array_equal(out, np.zeros((4, 3)))
        assert h[0, 0] == 0.0 and h[1, 0] == 3.0  # input untouched

    def test_shuffle_rows_permutes_without_changing_rows(self):
        rng = np.random.default_rng(70)
        h = rng.standard_normal((8, 3))
        out = corrupt_h_loc(h, "shuffle_rows", seed=1)
        assert out.shape == h.shape
        np.testing.assert_allclose(
            np.sort(out, axis=0)[np.lexsort(np.sort(out, axis=0).T[::-1])],
            np.sort(h, axis=0)[np.lexsort(np.sort(h, axis=0).T[::-1])],
        )
        rows_before = {tuple(row) for row in h}
        rows_after = {tuple(row) for row in out}
        assert rows_before == rows_after

    def test_shuffle_is_seeded(self):
        h = np.random.default_rng(71).standard_normal((10, 2))
        first = corrupt_h_loc(h, "shuffle_rows", seed=5)
        second = corrupt_h_loc(h, "shuffle_rows", seed=5)
        np.testing.assert_array_equal(first, second)

    def test_gaussian_adds_seeded_noise(self):
        h = np.ones((5, 4))
        noisy = corrupt_h_loc(h, "gaussian", noise_sigma=0.5, seed=2)
        again = corrupt_h_loc(h, "gaussian", noise_sigma=0.5, seed=2)
        np.testing.assert_array_equal(noisy, again)
        assert not np.array_equal(noisy, h)
        np.testing.assert_array_equal(h, np.ones((5, 4)))

    def test_gaussian_with_zero_sigma_is_identity(self):
        h = np.random.default_rng(72).standard_normal((6, 3))
        np.testing.assert_array_equal(corrupt_h_loc(h, "gaussian", noise_sigma=0.0), h)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="unknown corruption mode"):
            corrupt_h_loc(np.zeros((2, 2)), "negate")


class TestCorruptedScores:
    def test_zero_mode_matches_zeroed_branch_oracle(self):
        rng = np.random.default_rng(73)
        model = small_model()
        instance = make_instance(rng, "q1")
        got = corrupted_scores(model, instance, "zero")
        h_ind, _ = model.forward_individual(instance.x)
        h_loc, _ = model.forward_local(instance.x_aug, instance.ctx)
        expected = model.score_parts(h_ind, np.zeros_like(h_loc))
        np.testing.assert_allclose(got, expected, atol=1e-14)

    def test_inputs_are_never_modified(self):
        rng = np.random.default_rng(74)
        model = small_model()
        instance = make_instance(rng, "q1")
        x_before = instance.x.copy()
        aug_before = instance.x_aug.copy()
        for mode in CORRUPTION_MODES:
            corrupted_scores(model, instance, mode, seed=3)
        np.testing.assert_array_equal(instance.x, x_before)
        np.testing.assert_array_equal(instance.x_aug, aug_before)

    def test_seed_and_query_id_drive_the_noise(self):
        rng = np.random.default_rng(75)
        model = small_model()
        instance = make_instance(rng, "q1")
        same = corrupted_scores(model, instance, "gaussian", seed=4)
        again = corrupted_scores(model, instance, "gaussian", seed=4)
        other_seed = corrupted_scores(model, instance, "gaussian", seed=5)
        np.testing.assert_array_equal(same, again)
        assert not np.array_equal(same, other_seed)

    def test_rerank_rows_are_dense_and_tagged(self):
        rng = np.random.default_rng(76)
        model = small_model()
        instance = make_instance(rng, "q1", n=6)
        rows = rerank_corrupted(model, instance, "zero", tag="ablate-zero")
        assert [r[2] for r in rows] == [1, 2, 3, 4, 5, 6]
        assert all(r[4] == "ablate-zero" for r in rows)
        scores = [r[3] for r in rows]
        assert scores == sorted(scores, reverse=True)


class TestAblationReport:
    def build(self, seed=0, n_queries=4):
        rng = np.random.default_rng(seed)
        model = small_model(seed=seed)
        instances = [make_instance(rng, f"q{i}") for i in range(n_queries)]
        return model, instances, qrels_for(instances)

    def test_csv_shape_and_drop_arithmetic(self):
        model, instances, qrels = self.build(seed=77)
        report = ablation_report(model, instances, qrels, modes=["zero", "gaussian"])
        lines = report.as_csv().strip().split("\n")
        assert lines[0] == "mode,metric,with_gnn,without_gnn,drop"
        assert len(lines) == 1 + 2 * 4  # two modes, four metrics
        for row in report.rows:
            assert row.drop == pytest.approx(row.with_gnn - row.without_gnn)
        for line in lines[1:]:
            mode, metric, with_gnn, without_gnn, drop = line.split(",")
            assert float(drop) == pytest.approx(float(with_gnn) - float(without_gnn), abs=1e-5)

    def test_intact_column_is_mode_independent(self):
        model, instances, qrels = self.build(seed=78)
        report = ablation_report(model, instances, qrels, modes=list(CORRUPTION_MODES))
        for metric in ("ap", "rr", "p@3", "ndcg@10"):
            values = {row.with_gnn for row in report.rows if row.metric == metric}
            assert len(values) == 1

    def test_dead_graph_branch_shows_zero_drop(self):
        model, instances, qrels = self.build(seed=79)
        # Cut the scorer's view of the graph branch: every corruption of
        # H_loc is then invisible, so all drops must vanish exactly.
        model.scorer_layers[0].W[:, model.ind_dim :] = 0.0
        report = ablation_report(model, instances, qrels, modes=list(CORRUPTION_MODES))
        for row in report.rows:
            assert row.drop == pytest.approx(0.0, abs=1e-12)

    def test_value_lookup(self):
        report = AblationReport(
            rows=[AblationRow(mode="zero", metric="ap", with_gnn=0.5, without_gnn=0.25)]
        )
        assert report.value("zero", "ap").drop == pytest.approx(0.25)
        with pytest.raises(KeyError, match="no ablation row"):
            report.value("gaussian", "ap")

    def test_unknown_mode_rejected_up_front(self):
        model, instances, qrels = self.build(seed=80)
        with pytest.raises(ValueError, match="unknown corruption mode"):
            ablation_report(model, instances, qrels, modes=["flip"])

    def test_report_is_deterministic(self):
        model, instances, qrels = self.build(seed=81)
        first = ablation_report(model, instances, qrels, modes=["shuffle_rows", "gaussian"], seed=6)
        second = ablation_report(model, instances, qrels, modes=["shuffle_rows", "gaussian"], seed=6)
        assert first.as_csv() == second.as_csv()
