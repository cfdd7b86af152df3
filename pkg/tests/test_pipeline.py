import numpy as np
import pytest

from gnrr.corpus import Qrels, QuerySet, RunFile
from gnrr.embeddings import EmbeddingStore, pseudo_encode
from gnrr.gnn import ModelConfig, RerankModel
from gnrr.graph import build_corpus_graph
from gnrr.pipeline import (
    build_instance,
    build_instances_from_run,
    query_vector,
    stable_seed,
)


def tiny_world(n_docs=12, dim=6, seed=0):
    rng = np.random.default_rng(seed)
    ids = [f"d{i:03d}" for i in range(n_docs)]
    matrix = rng.standard_normal((n_docs, dim)).astype(np.float32)
    store = EmbeddingStore(dim=dim, ids=ids, matrix=matrix)
    graph = build_corpus_graph(store, ids, c=3)
    return store, graph


class TestStableSeed:
    def test_deterministic(self):
        assert stable_seed(7, "neg", "q1") == stable_seed(7, "neg", "q1")

    def test_sensitive_to_every_part(self):
        base = stable_seed(7, "neg", "q1")
        assert stable_seed(8, "neg", "q1") != base
        assert stable_seed(7, "pos", "q1") != base
        assert stable_seed(7, "neg", "q2") != base

    def test_part_order_matters(self):
        assert stable_seed(0, "a", "b") != stable_seed(0, "b", "a")

    def test_fits_in_uint64(self):
        for parts in (("x",), ("alpha", "beta"), ()):
            value = stable_seed(123, *parts)
            assert 0 <= value < 2**64


class TestBuildInstance:
    def test_features_are_elementwise_products(self):
        store, graph = tiny_world()
        rng = np.random.default_rng(1)
        z_q = rng.standard_normal(6)
        candidates = [("d003", 3.0), ("d001", 2.0), ("d007", 1.0)]
        instance = build_instance("q1", z_q, candidates, graph, store)
        assert instance.x.shape == (3, 6)
        assert instance.x_aug.shape == (3, 7)
        for row, (doc_id, _) in zip(instance.x, candidates):
            np.testing.assert_allclose(row, z_q * store.vector(doc_id), atol=1e-7)

    def test_rank_column_descends_from_one_to_zero(self):
        store, graph = tiny_world()
        candidates = [(f"d{i:03d}", float(5 - i)) for i in range(5)]
        instance = build_instance("q1", np.ones(6), candidates, graph, store)
        np.testing.assert_allclose(instance.x_aug[:, -1], [1.0, 0.75, 0.5, 0.25, 0.0])

    def test_grades_default_to_zero_for_unjudged(self):
        store, graph = tiny_world()
        qrels = Qrels(judgments={("q1", "d001"): 3, ("q1", "d999"): 2})
        candidates = [("d000", 2.0), ("d001", 1.0)]
        instance = build_instance("q1", np.ones(6), candidates, graph, store, qrels=qrels)
        np.testing.assert_array_equal(instance.grades, [0.0, 3.0])
        assert instance.ideal_grades == [3, 2]  # includes the unretrieved doc

    def test_without_qrels_everything_is_zero(self):
        store, graph = tiny_world()
        instance = build_instance("q1", np.ones(6), [("d000", 1.0)], graph, store)
        np.testing.assert_array_equal(instance.grades, [0.0])
        assert instance.ideal_grades == []

    def test_empty_candidates_rejected(self):
        store, graph = tiny_world()
        with pytest.raises(ValueError, match="no candidates"):
            build_instance("q1", np.ones(6), [], graph, store)

    def test_negative_sampling_is_per_query_stable(self):
        store, graph = tiny_world()
        candidates = [(f"d{i:03d}", float(9 - i)) for i in range(9)]
        first = build_instance("q1", np.ones(6), candidates, graph, store, neg_rho=2, neg_seed_base=5)
        second = build_instance("q1", np.ones(6), candidates, graph, store, neg_rho=2, neg_seed_base=5)
        np.testing.assert_array_equal(first.ctx.neg_src, second.ctx.neg_src)
        assert len(first.ctx.neg_src) > 0
        other_query = build_instance(
            "q2", np.ones(6), candidates, graph, store, neg_rho=2, neg_seed_base=5
        )
        assert not np.array_equal(first.ctx.neg_src, other_query.ctx.neg_src)

    def test_no_negative_edges_by_default(self):
        store, graph = tiny_world()
        instance = build_instance("q1", np.ones(6), [("d000", 1.0), ("d001", 0.5)], graph, store)
        assert len(instance.ctx.neg_src) == 0


class TestQueryVector:
    def test_prefers_the_store(self):
        rng = np.random.default_rng(2)
        matrix = rng.standard_normal((2, 4)).astype(np.float32)
        store = EmbeddingStore(dim=4, ids=["q1", "q2"], matrix=matrix)
        got = query_vector("q1", "some text", store, dim=4, encode_seed=0)
        np.testing.assert_allclose(got, store.vector("q1"))

    def test_falls_back_to_text_encoding(self):
        got = query_vector("q9", "alpha beta", None, dim=8, encode_seed=3)
        np.testing.assert_allclose(got, pseudo_encode(["alpha", "beta"], 8, seed=3))

    def test_store_miss_uses_text(self):
        store = EmbeddingStore(dim=8, ids=["other"], matrix=np.zeros((1, 8), dtype=np.float32))
        got = query_vector("q9", "alpha beta", store, dim=8, encode_seed=3)
        np.testing.assert_allclose(got, pseudo_encode(["alpha", "beta"], 8, seed=3))

    def test_no_text_no_store_is_an_error(self):
        with pytest.raises(ValueError, match="no embedding or text"):
            query_vector("q9", None, None, dim=8, encode_seed=0)

    def test_text_without_tokens_is_an_error(self):
        with pytest.raises(ValueError, match="no tokens"):
            query_vector("q9", "!!!", None, dim=8, encode_seed=0)


def run_rows(query_id, doc_ids):
    return [
        (query_id, doc_id, rank, 10.0 - rank, "bm25")
        for rank, doc_id in enumerate(doc_ids, start=1)
    ]


class TestBuildInstancesFromRun:
    def test_run_order_and_candidate_ranks(self):
        store, graph = tiny_world()
        run = RunFile(rows=run_rows("q2", ["d001", "d002"]) + run_rows("q1", ["d003"]))
        queries = QuerySet(queries=[("q1", "alpha"), ("q2", "beta")])
        instances = build_instances_from_run(run, queries, graph, store)
        assert [i.query_id for i in instances] == ["q2", "q1"]
        assert instances[0].doc_ids == ["d001", "d002"]

    def test_restrict_to_filters_and_skips_missing(self):
        store, graph = tiny_world()
        run = RunFile(rows=run_rows("q1", ["d001"]) + run_rows("q2", ["d002"]))
        queries = QuerySet(queries=[("q1", "alpha"), ("q2", "beta")])
        instances = build_instances_from_run(
            run, queries, graph, store, restrict_to=["q2", "q7"]
        )
        assert [i.query_id for i in instances] == ["q2"]

    def test_signed_model_requests_negative_edges(self):
        store, graph = tiny_world()
        run = RunFile(rows=run_rows("q1", [f"d{i:03d}" for i in range(8)]))
        queries = QuerySet(queries=[("q1", "alpha")])
        signed = RerankModel(
            ModelConfig(kind="signed", feature_dim=6, hidden_dim=4, neg_samples=2, seed=0)
        )
        plain = RerankModel(ModelConfig(kind="gcn", feature_dim=6, hidden_dim=4, seed=0))
        with_neg = build_instances_from_run(run, queries, graph, store, model=signed)
        without = build_instances_from_run(run, queries, graph, store, model=plain)
        assert len(with_neg[0].ctx.neg_src) > 0
        assert len(without[0].ctx.neg_src) == 0

    def test_qrels_grades_thread_through(self):
        store, graph = tiny_world()
        run = RunFile(rows=run_rows("q1", ["d000", "d001"]))
        queries = QuerySet(queries=[("q1", "alpha")])
        qrels = Qrels(judgments={("q1", "d001"): 2})
        instances = build_instances_from_run(run, queries, graph, store, qrels=qrels)
        np.testing.assert_array_equal(instances[0].grades, [0.0, 2.0])
