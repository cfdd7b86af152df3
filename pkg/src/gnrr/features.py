"""Node feature construction for query subgraphs.

Each candidate document's feature row is the element-wise product of the
query embedding with that document's embedding. For the graph branch the
matrix gains one extra column encoding the first-stage rank, scaled so the
top-ranked candidate gets 1.0 and the last gets 0.0.
"""

from __future__ import annotations

import numpy as np

from .embeddings import EmbeddingStore
from .graph import QuerySubgraph


def build_node_features(
    z_q: np.ndarray, sub: QuerySubgraph, store: EmbeddingStore
) -> np.ndarray:
    """(n, m) float64 matrix; row i = z_q * z_{d_i} componentwise."""
    z_q = np.asarray(z_q, dtype=np.float64)
    if z_q.shape != (store.dim,):
        raise ValueError(f"query vector has shape {z_q.shape}, store dim is {store.dim}")
    missing = [doc_id for doc_id in sub.doc_ids if doc_id not in store]
    if missing:
        raise ValueError(f"documents missing from embedding store: {missing[:5]}")
    doc_matrix = store.matrix_for(sub.doc_ids)
    features = z_q[None, :] * doc_matrix
    if not np.all(np.isfinite(features)):
        raise ValueError("non-finite node features")
    return features


def rank_feature(sub: QuerySubgraph) -> np.ndarray:
    """(n,) vector: 1 - (rank-1)/max(n-1, 1), linear from 1.0 down to 0.0."""
    n = sub.n_nodes
    ranks = sub.bm25_rank.astype(np.float64)
    return 1.0 - (ranks - 1.0) / max(n - 1, 1)


def augment_with_rank(features: np.ndarray, sub: QuerySubgraph) -> np.ndarray:
    """Append the rank column; the first m columns are untouched."""
    if features.shape[0] != sub.n_nodes:
        raise ValueError(
            f"feature rows ({features.shape[0]}) != subgraph nodes ({sub.n_nodes})"
        )
    return np.hstack([features, rank_feature(sub)[:, None]])
