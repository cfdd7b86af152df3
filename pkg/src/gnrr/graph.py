"""Semantic nearest-neighbour graphs over document embeddings.

The corpus graph stores, for every document, the c most cosine-similar other
documents (directed arcs, so every node has out-degree exactly min(c, N-1)).
A query's candidate list induces a subgraph: the corpus arcs with both
endpoints among the candidates, symmetrized for message passing. Ties in
similarity are always broken by doc_id ascending so builds are deterministic.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingStore
from .lexical import ScoredList

_MAGIC = b"CGR1"

# Source rows are processed in fixed-size blocks regardless of thread count,
# so the similarity arithmetic (and thus the graph) is identical for any
# --threads value.
_BLOCK_ROWS = 512


@dataclass
class CorpusGraph:
    c: int
    node_ids: list[str]
    neighbors: np.ndarray  # (N, min(c, N-1)) int64, similarity-descending

    def __post_init__(self):
        self.id_index = {node_id: i for i, node_id in enumerate(self.node_ids)}

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def neighbors_of(self, doc_id: str) -> list[str]:
        return [self.node_ids[j] for j in self.neighbors[self.id_index[doc_id]]]


@dataclass
class QuerySubgraph:
    """Candidates of one query plus the corpus arcs among them.

    edge_src/edge_dst hold the symmetrized, deduplicated edge list sorted by
    (src, dst); n_directed_arcs counts the kept corpus arcs before
    symmetrization (the quantity bounded by c * |nodes|).
    """

    query_id: str
    doc_ids: list[str]
    bm25_scores: np.ndarray  # (n,) float64, first-stage scores
    bm25_rank: np.ndarray  # (n,) int64, 1-based first-stage ranks
    edge_src: np.ndarray  # (E,) int64
    edge_dst: np.ndarray  # (E,) int64
    n_directed_arcs: int

    @property
    def n_nodes(self) -> int:
        return len(self.doc_ids)

    @property
    def n_edges(self) -> int:
        return len(self.edge_src)


def _id_ranks(ids: list[str]) -> np.ndarray:
    """Position of each id in ascending id order (the tie-break key)."""
    ranks = np.empty(len(ids), dtype=np.int64)
    for rank, index in enumerate(sorted(range(len(ids)), key=lambda i: ids[i])):
        ranks[index] = rank
    return ranks


def _topk_row(sims: np.ndarray, k: int, id_rank: np.ndarray) -> np.ndarray:
    """Indices of the k largest similarities, ties by id rank ascending."""
    if k >= len(sims):
        order = np.lexsort((id_rank, -sims))
        return order[:k]
    threshold = np.partition(sims, len(sims) - k)[len(sims) - k]
    candidates = np.flatnonzero(sims >= threshold)
    order = np.lexsort((id_rank[candidates], -sims[candidates]))
    return candidates[order[:k]]


def build_corpus_graph(
    store: EmbeddingStore, ids: list[str], c: int, threads: int = 1
) -> CorpusGraph:
    if c < 1:
        raise ValueError(f"c must be >= 1, got {c}")
    n = len(ids)
    if n < 2:
        raise ValueError(f"need at least 2 documents to build a graph, got {n}")
    missing = [doc_id for doc_id in ids if doc_id not in store]
    if missing:
        raise ValueError(f"ids missing from embedding store: {missing[:5]}")

    matrix = store.matrix_for(ids)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm embedding; cosine similarity undefined")
    unit = matrix / norms[:, None]

    k = min(c, n - 1)
    id_rank = _id_ranks(ids)
    neighbors = np.empty((n, k), dtype=np.int64)

    def process_block(start: int) -> None:
        stop = min(start + _BLOCK_ROWS, n)
        sims = unit[start:stop] @ unit.T
        for local, row in enumerate(range(start, stop)):
            row_sims = sims[local].copy()
            row_sims[row] = -np.inf  # no self-loops
            neighbors[row] = _topk_row(row_sims, k, id_rank)

    starts = range(0, n, _BLOCK_ROWS)
    if threads <= 1:
        for start in starts:
            process_block(start)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(process_block, starts))

    return CorpusGraph(c=c, node_ids=list(ids), neighbors=neighbors)


def induce_subgraph(
    graph: CorpusGraph, candidates: ScoredList, query_id: str = ""
) -> QuerySubgraph:
    """Restrict corpus arcs to a candidate set, then symmetrize."""
    doc_ids = [doc_id for doc_id, _ in candidates]
    scores = np.array([score for _, score in candidates], dtype=np.float64)
    position: dict[int, int] = {}
    for sub_index, doc_id in enumerate(doc_ids):
        graph_index = graph.id_index.get(doc_id)
        if graph_index is None:
            raise ValueError(f"candidate {doc_id!r} is not a corpus-graph node")
        position[graph_index] = sub_index

    arcs: list[tuple[int, int]] = []
    for graph_index, sub_index in position.items():
        for neighbor in graph.neighbors[graph_index]:
            target = position.get(int(neighbor))
            if target is not None:
                arcs.append((sub_index, target))

    symmetric = set(arcs)
    symmetric.update((j, i) for i, j in arcs)
    ordered = sorted(symmetric)
    edge_src = np.array([i for i, _ in ordered], dtype=np.int64)
    edge_dst = np.array([j for _, j in ordered], dtype=np.int64)
    return QuerySubgraph(
        query_id=query_id,
        doc_ids=doc_ids,
        bm25_scores=scores,
        bm25_rank=np.arange(1, len(doc_ids) + 1, dtype=np.int64),
        edge_src=edge_src,
        edge_dst=edge_dst,
        n_directed_arcs=len(arcs),
    )


def save_graph(graph: CorpusGraph, path) -> None:
    n = graph.n_nodes
    with open(path, "wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<II", n, graph.c))
        for node_id in graph.node_ids:
            encoded = node_id.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
        handle.write(graph.neighbors.astype("<u4").tobytes())


def load_graph(path) -> CorpusGraph:
    with open(path, "rb") as handle:
        data = handle.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a graph file (bad magic)")
    n, c = struct.unpack_from("<II", data, 4)
    offset = 12
    node_ids: list[str] = []
    for i in range(n):
        if offset + 2 > len(data):
            raise ValueError(f"{path}: truncated in id table at node {i}")
        (length,) = struct.unpack_from("<H", data, offset)
        offset += 2
        node_ids.append(data[offset : offset + length].decode("utf-8"))
        offset += length
    k = min(c, n - 1)
    expected = n * k * 4
    if len(data) - offset != expected:
        raise ValueError(
            f"{path}: neighbor table has {len(data) - offset} bytes, expected {expected}"
        )
    neighbors = (
        np.frombuffer(data, dtype="<u4", count=n * k, offset=offset)
        .reshape(n, k)
        .astype(np.int64)
    )
    return CorpusGraph(c=c, node_ids=node_ids, neighbors=neighbors)
