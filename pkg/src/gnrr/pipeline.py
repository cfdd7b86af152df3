"""Assembly of per-query model inputs from retrieval artifacts.

One QueryInstance bundles everything the model needs to score a query's
candidates: the induced subgraph, plain and rank-augmented feature matrices,
the adjacency context (including sampled negative edges for the signed
layer), and the judged grades used by training and evaluation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .corpus import Qrels, QuerySet, RunFile, tokenize
from .embeddings import EmbeddingStore, pseudo_encode
from .features import augment_with_rank, build_node_features
from .gnn import GraphContext, RerankModel, make_context, sample_negative_edges
from .graph import CorpusGraph, QuerySubgraph, induce_subgraph
from .lexical import ScoredList


def stable_seed(base: int, *parts: str) -> int:
    """Deterministic 64-bit seed from a base seed and string parts."""
    hasher = hashlib.blake2b(digest_size=8)
    hasher.update(str(base).encode("utf-8"))
    for part in parts:
        hasher.update(b"\x00")
        hasher.update(part.encode("utf-8"))
    return int.from_bytes(hasher.digest(), "little")


@dataclass
class QueryInstance:
    query_id: str
    sub: QuerySubgraph
    x: np.ndarray  # (n, m) plain features
    x_aug: np.ndarray  # (n, m+1) rank-augmented features
    ctx: GraphContext
    grades: np.ndarray  # (n,) judged grade per candidate (0 when unjudged)
    ideal_grades: list[int]  # every judged grade for this query

    @property
    def doc_ids(self) -> list[str]:
        return self.sub.doc_ids


def build_instance(
    query_id: str,
    z_q: np.ndarray,
    candidates: ScoredList,
    graph: CorpusGraph,
    store: EmbeddingStore,
    qrels: Qrels | None = None,
    neg_rho: int = 0,
    neg_seed_base: int = 0,
) -> QueryInstance:
    if not candidates:
        raise ValueError(f"query {query_id!r} has no candidates")
    sub = induce_subgraph(graph, candidates, query_id=query_id)
    x = build_node_features(z_q, sub, store)
    x_aug = augment_with_rank(x, sub)
    neg_edges = None
    if neg_rho > 0:
        neg_edges = sample_negative_edges(
            sub, rho=neg_rho, seed=stable_seed(neg_seed_base, "neg", query_id)
        )
    ctx = make_context(sub, neg_edges=neg_edges)
    if qrels is not None:
        grades = np.array(
            [qrels.grade(query_id, doc_id) for doc_id in sub.doc_ids], dtype=np.float64
        )
        ideal = sorted(qrels.grades_for(query_id).values(), reverse=True)
    else:
        grades = np.zeros(sub.n_nodes, dtype=np.float64)
        ideal = []
    return QueryInstance(
        query_id=query_id,
        sub=sub,
        x=x,
        x_aug=x_aug,
        ctx=ctx,
        grades=grades,
        ideal_grades=ideal,
    )


def query_vector(
    query_id: str,
    query_text: str | None,
    query_store: EmbeddingStore | None,
    dim: int,
    encode_seed: int,
) -> np.ndarray:
    """Query embedding from a store when available, else pseudo-encoded."""
    if query_store is not None and query_id in query_store:
        return query_store.vector(query_id)
    if query_text is None:
        raise ValueError(f"no embedding or text available for query {query_id!r}")
    tokens = tokenize(query_text)
    if not tokens:
        raise ValueError(f"query {query_id!r} has no tokens to encode")
    return pseudo_encode(tokens, dim, seed=encode_seed)


def build_instances_from_run(
    run: RunFile,
    queries: QuerySet,
    graph: CorpusGraph,
    store: EmbeddingStore,
    qrels: Qrels | None = None,
    model: RerankModel | None = None,
    query_store: EmbeddingStore | None = None,
    encode_seed: int = 0,
    restrict_to: list[str] | None = None,
) -> list[QueryInstance]:
    """One instance per run query (in run order), grades filled from qrels.

    restrict_to limits the output to the listed query ids (the train/val
    split mechanism); queries in the list but absent from the run are
    silently skipped — they have no candidates to score.
    """
    text_of = queries.as_dict()
    wanted = None if restrict_to is None else set(restrict_to)
    neg_rho = 0
    neg_seed_base = 0
    if model is not None and model.config.kind == "signed":
        neg_rho = model.config.neg_samples
        neg_seed_base = model.config.seed
    instances = []
    for query_id in run.query_ids():
        if wanted is not None and query_id not in wanted:
            continue
        rows = sorted(run.rows_for(query_id), key=lambda r: r[2])
        candidates = [(doc_id, score) for _, doc_id, _, score, _ in rows]
        z_q = query_vector(
            query_id, text_of.get(query_id), query_store, store.dim, encode_seed
        )
        instances.append(
            build_instance(
                query_id,
                z_q,
                candidates,
                graph,
                store,
                qrels=qrels,
                neg_rho=neg_rho,
                neg_seed_base=neg_seed_base,
            )
        )
    return instances
