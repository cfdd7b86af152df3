"""Finite-difference verification of the hand-written backward passes.

The check treats the model as a black box computing L = ds . scores for a
fixed random ds, compares the analytic gradient of L against central
differences per parameter block, and reports the block-norm relative error

    err = ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2, 1e-12).

Used both by the test suite and the command-line `gradcheck` report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gnn import (
    ForwardState,
    GraphContext,
    ModelConfig,
    RerankModel,
    make_context,
    sample_negative_edges,
)
from .graph import QuerySubgraph

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4


def random_subgraph(rng: np.random.Generator, n_nodes: int, edge_prob: float = 0.35) -> QuerySubgraph:
    """A random symmetric subgraph for exercising layers in tests."""
    pairs = set()
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < edge_prob:
                pairs.add((i, j))
                pairs.add((j, i))
    ordered = sorted(pairs)
    return QuerySubgraph(
        query_id="synthetic",
        doc_ids=[f"d{i:03d}" for i in range(n_nodes)],
        bm25_scores=np.linspace(float(n_nodes), 1.0, n_nodes),
        bm25_rank=np.arange(1, n_nodes + 1, dtype=np.int64),
        edge_src=np.array([i for i, _ in ordered], dtype=np.int64),
        edge_dst=np.array([j for _, j in ordered], dtype=np.int64),
        n_directed_arcs=len(ordered),
    )


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


@dataclass
class BlockReport:
    label: str
    error: float


@dataclass
class GradCheckReport:
    kind: str
    individual: str
    n_nodes: int
    blocks: list[BlockReport]

    @property
    def max_error(self) -> float:
        return max(block.error for block in self.blocks)

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.max_error < tolerance


def check_model(
    model: RerankModel,
    x: np.ndarray,
    x_aug: np.ndarray,
    ctx: GraphContext,
    d_scores: np.ndarray,
    step: float = DEFAULT_STEP,
) -> GradCheckReport:
    """Compare analytic parameter gradients against central differences."""

    def loss() -> float:
        state = model.score(x, x_aug, ctx)
        return float(np.dot(d_scores, state.scores))

    state: ForwardState = model.score(x, x_aug, ctx)
    analytic = model.backward(state, d_scores)

    blocks: list[BlockReport] = []
    for param, grads, label in zip(model.parameters(), analytic, model.parameter_labels()):
        numeric = np.zeros_like(param, dtype=np.float64).reshape(-1)
        flat = param.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + step
            upper = loss()
            flat[index] = original - step
            lower = loss()
            flat[index] = original
            numeric[index] = (upper - lower) / (2.0 * step)
        blocks.append(BlockReport(label=label, error=relative_error(np.asarray(grads).reshape(-1), numeric)))
    return GradCheckReport(
        kind=model.config.kind,
        individual=model.config.individual,
        n_nodes=ctx.n,
        blocks=blocks,
    )


def run_trial(
    kind: str,
    rng: np.random.Generator,
    n_nodes: int | None = None,
    feature_dim: int = 5,
    hidden_dim: int = 4,
    layers: int = 2,
    individual: str = "identity",
    neg_samples: int = 3,
    step: float = DEFAULT_STEP,
) -> GradCheckReport:
    """One randomized model + graph + input instance, checked end to end."""
    n = n_nodes if n_nodes is not None else int(rng.integers(6, 13))
    sub = random_subgraph(rng, n)
    neg = None
    if kind == "signed":
        neg = sample_negative_edges(sub, rho=neg_samples, seed=int(rng.integers(2**31)))
    ctx = make_context(sub, neg_edges=neg)
    config = ModelConfig(
        kind=kind,
        feature_dim=feature_dim,
        layers=layers,
        hidden_dim=hidden_dim,
        individual=individual,
        scorer_hidden=4,
        seed=int(rng.integers(2**31)),
        neg_samples=neg_samples,
    )
    model = RerankModel(config)
    # Check at a generic point: zero-initialized biases leave relu
    # pre-activations of dead rows exactly on the kink, where one-sided
    # slopes and finite differences legitimately disagree.
    for param in model.parameters():
        param[...] = rng.uniform(-0.7, 0.7, size=param.shape)
    x = rng.standard_normal((n, feature_dim))
    x_aug = np.hstack([x, rng.uniform(size=(n, 1))])
    d_scores = rng.standard_normal(n)
    return check_model(model, x, x_aug, ctx, d_scores, step=step)
