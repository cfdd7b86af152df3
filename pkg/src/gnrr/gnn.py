"""Message-passing re-ranking model with hand-derived backward passes.

The model scores a query's candidate documents with two branches:

  * a graph branch: L message-passing layers over the query subgraph, fed
    the rank-augmented feature matrix;
  * an individual branch: either the identity (per-document features pass
    straight through) or a small per-row MLP.

Branch outputs are concatenated row-wise and a dense scorer maps each row to
one real score; candidates are then sorted by score. There is no autodiff
anywhere — every layer implements its own exact backward pass, kept honest by
finite-difference checks in the test suite.

Weight convention: a dense map stores W with shape (out, in) and applies it
as X @ W.T + b. Weights start Glorot-uniform from a seeded generator consumed
in declaration order; biases start at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import QuerySubgraph

LAYER_KINDS = ("gcn", "sage", "gat", "gin", "signed")

_LEAKY_SLOPE = 0.2


# ---------------------------------------------------------------------------
# activations


def apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "elu":
        return np.where(z > 0.0, z, np.expm1(z))
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, z: np.ndarray) -> np.ndarray:
    """d act(z) / dz, elementwise."""
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "elu":
        return np.where(z > 0.0, 1.0, np.exp(z))
    raise ValueError(f"unknown activation {name!r}")


def glorot(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


# ---------------------------------------------------------------------------
# per-query adjacency context


@dataclass
class GraphContext:
    """Edge arrays and degree tables derived from one query subgraph.

    Edges are the symmetrized pairs; an entry (src, dst) delivers a message
    from src to dst. neg_src/neg_dst hold sampled non-neighbor pairs for the
    signed layer (empty arrays when unused).
    """

    n: int
    edge_src: np.ndarray
    edge_dst: np.ndarray
    deg: np.ndarray  # (n,) float64 neighbor counts
    neg_src: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    neg_dst: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))

    def __post_init__(self):
        self.inv_sqrt_deg_hat = 1.0 / np.sqrt(self.deg + 1.0)
        self.safe_deg = np.maximum(self.deg, 1.0)
        # Attention support: every edge plus one self-loop per node.
        loops = np.arange(self.n, dtype=np.int64)
        self.att_src = np.concatenate([self.edge_src, loops])
        self.att_dst = np.concatenate([self.edge_dst, loops])
        self.neg_deg = np.zeros(self.n, dtype=np.float64)
        np.add.at(self.neg_deg, self.neg_dst, 1.0)
        self.safe_neg_deg = np.maximum(self.neg_deg, 1.0)


def make_context(
    sub: QuerySubgraph, neg_edges: tuple[np.ndarray, np.ndarray] | None = None
) -> GraphContext:
    deg = np.zeros(sub.n_nodes, dtype=np.float64)
    np.add.at(deg, sub.edge_dst, 1.0)
    neg_src, neg_dst = neg_edges if neg_edges is not None else (
        np.array([], dtype=np.int64),
        np.array([], dtype=np.int64),
    )
    return GraphContext(
        n=sub.n_nodes,
        edge_src=sub.edge_src,
        edge_dst=sub.edge_dst,
        deg=deg,
        neg_src=neg_src,
        neg_dst=neg_dst,
    )


def sample_negative_edges(
    sub: QuerySubgraph, rho: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per node, rho uniform non-neighbors (all of them if fewer exist)."""
    n = sub.n_nodes
    rng = np.random.default_rng(seed)
    neighbor_sets: list[set[int]] = [set() for _ in range(n)]
    for src, dst in zip(sub.edge_src.tolist(), sub.edge_dst.tolist()):
        neighbor_sets[dst].add(src)
    neg_src: list[int] = []
    neg_dst: list[int] = []
    for i in range(n):
        blocked = neighbor_sets[i] | {i}
        pool = np.array([j for j in range(n) if j not in blocked], dtype=np.int64)
        if len(pool) == 0:
            continue
        if len(pool) <= rho:
            chosen = pool
        else:
            chosen = rng.choice(pool, size=rho, replace=False)
        for j in sorted(chosen.tolist()):
            neg_src.append(j)
            neg_dst.append(i)
    return np.array(neg_src, dtype=np.int64), np.array(neg_dst, dtype=np.int64)


def _scatter_mean(
    h: np.ndarray, src: np.ndarray, dst: np.ndarray, safe_counts: np.ndarray
) -> np.ndarray:
    """Row i = mean of h[j] over incoming (j -> i); zero when no senders."""
    total = np.zeros_like(h)
    np.add.at(total, dst, h[src])
    return total / safe_counts[:, None]


# ---------------------------------------------------------------------------
# layers


class DenseLayer:
    """act(X @ W.T + b), applied row-wise."""

    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int, activation: str):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.W = glorot(rng, out_dim, in_dim)
        self.b = np.zeros(out_dim)

    def params(self) -> list[np.ndarray]:
        return [self.W, self.b]

    def param_names(self) -> list[str]:
        return ["W", "b"]

    def forward(self, h: np.ndarray):
        if h.shape[1] != self.in_dim:
            raise ValueError(f"dense layer expects width {self.in_dim}, got {h.shape[1]}")
        z = h @ self.W.T + self.b
        return apply_activation(self.activation, z), {"h": h, "z": z}

    def backward(self, d_out: np.ndarray, cache: dict):
        dz = d_out * activation_grad(self.activation, cache["z"])
        grads = [dz.T @ cache["h"], dz.sum(axis=0)]
        return dz @ self.W, grads


class GcnLayer:
    """act(normalized-adjacency @ H @ W.T + b) with implicit self-loops."""

    kind = "gcn"

    def __init__(self, rng, in_dim: int, out_dim: int, activation: str = "relu"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.W = glorot(rng, out_dim, in_dim)
        self.b = np.zeros(out_dim)

    def params(self):
        return [self.W, self.b]

    def param_names(self):
        return ["W", "b"]

    def forward(self, h: np.ndarray, ctx: GraphContext):
        if h.shape != (ctx.n, self.in_dim):
            raise ValueError(f"expected ({ctx.n}, {self.in_dim}) input, got {h.shape}")
        scale = ctx.inv_sqrt_deg_hat[:, None]
        h_scaled = h * scale
        mixed = h_scaled.copy()  # self-loop term
        np.add.at(mixed, ctx.edge_dst, h_scaled[ctx.edge_src])
        mixed *= scale
        z = mixed @ self.W.T + self.b
        return apply_activation(self.activation, z), {"z": z, "mixed": mixed, "h": h}

    def backward(self, d_out: np.ndarray, cache: dict, ctx: GraphContext):
        dz = d_out * activation_grad(self.activation, cache["z"])
        grads = [dz.T @ cache["mixed"], dz.sum(axis=0)]
        scale = ctx.inv_sqrt_deg_hat[:, None]
        d_mixed = (dz @ self.W) * scale
        d_scaled = d_mixed.copy()
        np.add.at(d_scaled, ctx.edge_src, d_mixed[ctx.edge_dst])
        return d_scaled * scale, grads


class SageLayer:
    """act(H @ W_self.T + mean-neighbors @ W_neigh.T + b)."""

    kind = "sage"

    def __init__(self, rng, in_dim: int, out_dim: int, activation: str = "relu"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.W_self = glorot(rng, out_dim, in_dim)
        self.W_neigh = glorot(rng, out_dim, in_dim)
        self.b = np.zeros(out_dim)

    def params(self):
        return [self.W_self, self.W_neigh, self.b]

    def param_names(self):
        return ["W_self", "W_neigh", "b"]

    def forward(self, h: np.ndarray, ctx: GraphContext):
        if h.shape != (ctx.n, self.in_dim):
            raise ValueError(f"expected ({ctx.n}, {self.in_dim}) input, got {h.shape}")
        mean = _scatter_mean(h, ctx.edge_src, ctx.edge_dst, ctx.safe_deg)
        z = h @ self.W_self.T + mean @ self.W_neigh.T + self.b
        return apply_activation(self.activation, z), {"z": z, "h": h, "mean": mean}

    def backward(self, d_out: np.ndarray, cache: dict, ctx: GraphContext):
        dz = d_out * activation_grad(self.activation, cache["z"])
        grads = [dz.T @ cache["h"], dz.T @ cache["mean"], dz.sum(axis=0)]
        dh = dz @ self.W_self
        d_mean = (dz @ self.W_neigh) / ctx.safe_deg[:, None]
        np.add.at(dh, ctx.edge_src, d_mean[ctx.edge_dst])
        return dh, grads


class GatLayer:
    """Single-head attention over each node's neighbors plus itself.

    e_ij = LeakyReLU(a . [W h_i || W h_j]), alpha = softmax over senders j,
    out_i = act(sum_j alpha_ij W h_j + b).
    """

    kind = "gat"

    def __init__(self, rng, in_dim: int, out_dim: int, activation: str = "elu"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.W = glorot(rng, out_dim, in_dim)
        self.a = glorot(rng, 1, 2 * out_dim).ravel()
        self.b = np.zeros(out_dim)

    def params(self):
        return [self.W, self.a, self.b]

    def param_names(self):
        return ["W", "a", "b"]

    def forward(self, h: np.ndarray, ctx: GraphContext):
        if h.shape != (ctx.n, self.in_dim):
            raise ValueError(f"expected ({ctx.n}, {self.in_dim}) input, got {h.shape}")
        g = h @ self.W.T
        a_recv, a_send = self.a[: self.out_dim], self.a[self.out_dim :]
        recv_term = g @ a_recv
        send_term = g @ a_send
        e_pre = recv_term[ctx.att_dst] + send_term[ctx.att_src]
        e = np.where(e_pre > 0.0, e_pre, _LEAKY_SLOPE * e_pre)
        # Numerically shifted softmax grouped by receiving node.
        shift = np.full(ctx.n, -np.inf)
        np.maximum.at(shift, ctx.att_dst, e)
        exp_e = np.exp(e - shift[ctx.att_dst])
        denom = np.zeros(ctx.n)
        np.add.at(denom, ctx.att_dst, exp_e)
        alpha = exp_e / denom[ctx.att_dst]
        summed = np.zeros_like(g)
        np.add.at(summed, ctx.att_dst, alpha[:, None] * g[ctx.att_src])
        z = summed + self.b
        out = apply_activation(self.activation, z)
        cache = {"h": h, "g": g, "e_pre": e_pre, "alpha": alpha, "z": z}
        return out, cache

    def backward(self, d_out: np.ndarray, cache: dict, ctx: GraphContext):
        g, alpha, e_pre = cache["g"], cache["alpha"], cache["e_pre"]
        dz = d_out * activation_grad(self.activation, cache["z"])
        db = dz.sum(axis=0)
        dg = np.zeros_like(g)
        # Through the message sum: both alpha and the sender features.
        np.add.at(dg, ctx.att_src, alpha[:, None] * dz[ctx.att_dst])
        d_alpha = np.einsum("ef,ef->e", dz[ctx.att_dst], g[ctx.att_src])
        # Softmax backward within each receiver group.
        inner = np.zeros(ctx.n)
        np.add.at(inner, ctx.att_dst, alpha * d_alpha)
        de = alpha * (d_alpha - inner[ctx.att_dst])
        de_pre = de * np.where(e_pre > 0.0, 1.0, _LEAKY_SLOPE)
        a_recv, a_send = self.a[: self.out_dim], self.a[self.out_dim :]
        da = np.concatenate(
            [
                (de_pre[:, None] * g[ctx.att_dst]).sum(axis=0),
                (de_pre[:, None] * g[ctx.att_src]).sum(axis=0),
            ]
        )
        np.add.at(dg, ctx.att_dst, de_pre[:, None] * a_recv[None, :])
        np.add.at(dg, ctx.att_src, de_pre[:, None] * a_send[None, :])
        grads = [dg.T @ cache["h"], da, db]
        return dg @ self.W, grads


class GinLayer:
    """MLP((1 + eps) h_i + sum of neighbor features); eps is trainable."""

    kind = "gin"

    def __init__(self, rng, in_dim: int, out_dim: int, activation: str = "relu"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.eps = np.zeros(())
        self.mlp1 = DenseLayer(rng, in_dim, out_dim, "relu")
        self.mlp2 = DenseLayer(rng, out_dim, out_dim, activation)

    def params(self):
        return [self.eps, *self.mlp1.params(), *self.mlp2.params()]

    def param_names(self):
        return ["eps", "mlp1.W", "mlp1.b", "mlp2.W", "mlp2.b"]

    def forward(self, h: np.ndarray, ctx: GraphContext):
        if h.shape != (ctx.n, self.in_dim):
            raise ValueError(f"expected ({ctx.n}, {self.in_dim}) input, got {h.shape}")
        summed = np.zeros_like(h)
        np.add.at(summed, ctx.edge_dst, h[ctx.edge_src])
        agg = (1.0 + float(self.eps)) * h + summed
        hidden, cache1 = self.mlp1.forward(agg)
        out, cache2 = self.mlp2.forward(hidden)
        return out, {"h": h, "agg": agg, "mlp1": cache1, "mlp2": cache2}

    def backward(self, d_out: np.ndarray, cache: dict, ctx: GraphContext):
        d_hidden, grads2 = self.mlp2.backward(d_out, cache["mlp2"])
        d_agg, grads1 = self.mlp1.backward(d_hidden, cache["mlp1"])
        d_eps = np.array(np.sum(d_agg * cache["h"]))
        dh = (1.0 + float(self.eps)) * d_agg
        np.add.at(dh, ctx.edge_src, d_agg[ctx.edge_dst])
        return dh, [d_eps, *grads1, *grads2]


class SignedLayer:
    """Two half-width maps over positive-mean and sampled-negative-mean input.

    out_i = act(W_pos [h_i || pos_mean_i] + b_pos) || act(W_neg [h_i || neg_mean_i] + b_neg)
    """

    kind = "signed"

    def __init__(self, rng, in_dim: int, out_dim: int, activation: str = "relu"):
        if out_dim % 2 != 0:
            raise ValueError(f"signed layer needs an even output width, got {out_dim}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.half = out_dim // 2
        self.activation = activation
        self.W_pos = glorot(rng, self.half, 2 * in_dim)
        self.b_pos = np.zeros(self.half)
        self.W_neg = glorot(rng, self.half, 2 * in_dim)
        self.b_neg = np.zeros(self.half)

    def params(self):
        return [self.W_pos, self.b_pos, self.W_neg, self.b_neg]

    def param_names(self):
        return ["W_pos", "b_pos", "W_neg", "b_neg"]

    def forward(self, h: np.ndarray, ctx: GraphContext):
        if h.shape != (ctx.n, self.in_dim):
            raise ValueError(f"expected ({ctx.n}, {self.in_dim}) input, got {h.shape}")
        pos_mean = _scatter_mean(h, ctx.edge_src, ctx.edge_dst, ctx.safe_deg)
        neg_mean = _scatter_mean(h, ctx.neg_src, ctx.neg_dst, ctx.safe_neg_deg)
        cat_pos = np.hstack([h, pos_mean])
        cat_neg = np.hstack([h, neg_mean])
        z_pos = cat_pos @ self.W_pos.T + self.b_pos
        z_neg = cat_neg @ self.W_neg.T + self.b_neg
        out = np.hstack(
            [apply_activation(self.activation, z_pos), apply_activation(self.activation, z_neg)]
        )
        cache = {"cat_pos": cat_pos, "cat_neg": cat_neg, "z_pos": z_pos, "z_neg": z_neg}
        return out, cache

    def backward(self, d_out: np.ndarray, cache: dict, ctx: GraphContext):
        dz_pos = d_out[:, : self.half] * activation_grad(self.activation, cache["z_pos"])
        dz_neg = d_out[:, self.half :] * activation_grad(self.activation, cache["z_neg"])
        grads = [
            dz_pos.T @ cache["cat_pos"],
            dz_pos.sum(axis=0),
            dz_neg.T @ cache["cat_neg"],
            dz_neg.sum(axis=0),
        ]
        d_cat_pos = dz_pos @ self.W_pos
        d_cat_neg = dz_neg @ self.W_neg
        dh = d_cat_pos[:, : self.in_dim] + d_cat_neg[:, : self.in_dim]
        d_pos_mean = d_cat_pos[:, self.in_dim :] / ctx.safe_deg[:, None]
        np.add.at(dh, ctx.edge_src, d_pos_mean[ctx.edge_dst])
        d_neg_mean = d_cat_neg[:, self.in_dim :] / ctx.safe_neg_deg[:, None]
        np.add.at(dh, ctx.neg_src, d_neg_mean[ctx.neg_dst])
        return dh, grads


_GNN_LAYER_CLASSES = {
    "gcn": GcnLayer,
    "sage": SageLayer,
    "gat": GatLayer,
    "gin": GinLayer,
    "signed": SignedLayer,
}


def make_gnn_layer(kind: str, rng, in_dim: int, out_dim: int):
    if kind not in _GNN_LAYER_CLASSES:
        raise ValueError(f"unknown layer kind {kind!r}; choose one of {LAYER_KINDS}")
    activation = "elu" if kind == "gat" else "relu"
    return _GNN_LAYER_CLASSES[kind](rng, in_dim, out_dim, activation)


# ---------------------------------------------------------------------------
# the full model


@dataclass
class ModelConfig:
    kind: str = "gcn"
    feature_dim: int = 64  # embedding width m; graph branch reads m+1 columns
    layers: int = 2
    hidden_dim: int = 32
    individual: str = "identity"  # or "mlp"
    scorer_hidden: int = 32
    seed: int = 0
    neg_samples: int = 8  # signed layers only

    def validate(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.layers < 1:
            raise ValueError("the graph branch needs at least one layer")
        if self.individual not in ("identity", "mlp"):
            raise ValueError(f"individual branch must be identity or mlp, got {self.individual!r}")
        for name in ("feature_dim", "hidden_dim", "scorer_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.neg_samples < 0:
            raise ValueError("neg_samples must be non-negative")


@dataclass
class ForwardState:
    """Everything the backward pass needs from one scoring call."""

    x: np.ndarray
    x_aug: np.ndarray
    ctx: GraphContext
    gnn_caches: list
    ind_caches: list
    scorer_caches: list
    h_loc: np.ndarray
    h_ind: np.ndarray
    scores: np.ndarray


class RerankModel:
    """Graph branch + individual branch + row-wise scorer."""

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        m, hid = config.feature_dim, config.hidden_dim
        self.gnn_layers = []
        in_dim = m + 1
        for _ in range(config.layers):
            self.gnn_layers.append(make_gnn_layer(config.kind, rng, in_dim, hid))
            in_dim = hid
        self.ind_layers: list[DenseLayer] = []
        if config.individual == "mlp":
            self.ind_layers = [
                DenseLayer(rng, m, hid, "relu"),
                DenseLayer(rng, hid, hid, "relu"),
            ]
        self.ind_dim = m if config.individual == "identity" else hid
        self.scorer_layers = [
            DenseLayer(rng, self.ind_dim + hid, config.scorer_hidden, "relu"),
            DenseLayer(rng, config.scorer_hidden, 1, "identity"),
        ]

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        """Live arrays in declaration order (graph, individual, scorer)."""
        params: list[np.ndarray] = []
        for layer in self.gnn_layers:
            params.extend(layer.params())
        for layer in self.ind_layers:
            params.extend(layer.params())
        for layer in self.scorer_layers:
            params.extend(layer.params())
        return params

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def parameter_labels(self) -> list[str]:
        """One label per parameters() entry, e.g. 'graph0.W', 'scorer1.b'."""
        labels: list[str] = []
        for i, layer in enumerate(self.gnn_layers):
            labels.extend(f"graph{i}.{name}" for name in layer.param_names())
        for i, layer in enumerate(self.ind_layers):
            labels.extend(f"individual{i}.{name}" for name in layer.param_names())
        for i, layer in enumerate(self.scorer_layers):
            labels.extend(f"scorer{i}.{name}" for name in layer.param_names())
        return labels

    # -- forward ------------------------------------------------------------

    def forward_local(self, x_aug: np.ndarray, ctx: GraphContext):
        if x_aug.shape[1] != self.config.feature_dim + 1:
            raise ValueError(
                f"graph branch expects width {self.config.feature_dim + 1}, "
                f"got {x_aug.shape[1]} (did you forget the rank column?)"
            )
        h = x_aug
        caches = []
        for layer in self.gnn_layers:
            h, cache = layer.forward(h, ctx)
            caches.append(cache)
        return h, caches

    def forward_individual(self, x: np.ndarray):
        if x.shape[1] != self.config.feature_dim:
            raise ValueError(
                f"individual branch expects width {self.config.feature_dim}, got {x.shape[1]}"
            )
        if not self.ind_layers:
            return x, []
        h = x
        caches = []
        for layer in self.ind_layers:
            h, cache = layer.forward(h)
            caches.append(cache)
        return h, caches

    def score_parts(self, h_ind: np.ndarray, h_loc: np.ndarray) -> np.ndarray:
        """Scores from precomputed branch outputs (the ablation hook)."""
        scores, _ = self._scorer_forward(h_ind, h_loc)
        return scores

    def _scorer_forward(self, h_ind: np.ndarray, h_loc: np.ndarray):
        h = np.hstack([h_ind, h_loc])
        caches = []
        for layer in self.scorer_layers:
            h, cache = layer.forward(h)
            caches.append(cache)
        return h[:, 0], caches

    def score(self, x: np.ndarray, x_aug: np.ndarray, ctx: GraphContext) -> ForwardState:
        h_loc, gnn_caches = self.forward_local(x_aug, ctx)
        h_ind, ind_caches = self.forward_individual(x)
        scores, scorer_caches = self._scorer_forward(h_ind, h_loc)
        return ForwardState(
            x=x,
            x_aug=x_aug,
            ctx=ctx,
            gnn_caches=gnn_caches,
            ind_caches=ind_caches,
            scorer_caches=scorer_caches,
            h_loc=h_loc,
            h_ind=h_ind,
            scores=scores,
        )

    # -- backward -----------------------------------------------------------

    def backward(self, state: ForwardState, d_scores: np.ndarray) -> list[np.ndarray]:
        """Gradients for every parameter, aligned with parameters()."""
        d_scores = np.asarray(d_scores, dtype=np.float64)
        grads_scorer: list[np.ndarray] = []
        d_h = d_scores[:, None]
        for layer, cache in zip(reversed(self.scorer_layers), reversed(state.scorer_caches)):
            d_h, grads = layer.backward(d_h, cache)
            grads_scorer = grads + grads_scorer
        d_h_ind = d_h[:, : self.ind_dim]
        d_h_loc = d_h[:, self.ind_dim :]

        grads_ind: list[np.ndarray] = []
        if self.ind_layers:
            d_cur = d_h_ind
            for layer, cache in zip(reversed(self.ind_layers), reversed(state.ind_caches)):
                d_cur, grads = layer.backward(d_cur, cache)
                grads_ind = grads + grads_ind

        grads_gnn: list[np.ndarray] = []
        d_cur = d_h_loc
        for layer, cache in zip(reversed(self.gnn_layers), reversed(state.gnn_caches)):
            d_cur, grads = layer.backward(d_cur, cache, state.ctx)
            grads_gnn = grads + grads_gnn

        return grads_gnn + grads_ind + grads_scorer


def rerank_order(scores: np.ndarray, doc_ids: list[str]) -> list[int]:
    """Indices sorted by score descending, doc_id ascending on ties."""
    return sorted(range(len(doc_ids)), key=lambda i: (-scores[i], doc_ids[i]))


def rerank_rows(
    query_id: str, doc_ids: list[str], scores: np.ndarray, tag: str
) -> list[tuple[str, str, int, float, str]]:
    """TREC run rows for one query, ranks assigned 1..n in sorted order."""
    rows = []
    for rank, index in enumerate(rerank_order(scores, doc_ids), start=1):
        rows.append((query_id, doc_ids[index], rank, float(scores[index]), tag))
    return rows


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: RerankModel, path) -> None:
    """Textual config header, blank line, then raw f64 parameter bytes."""
    cfg = model.config
    lines = [
        f"kind={cfg.kind}",
        f"layers={cfg.layers}",
        f"feature_dim={cfg.feature_dim}",
        f"hidden_dim={cfg.hidden_dim}",
        f"individual={cfg.individual}",
        f"scorer_hidden={cfg.scorer_hidden}",
        f"seed={cfg.seed}",
        f"neg_samples={cfg.neg_samples}",
    ]
    header = "\n".join(lines) + "\n\n"
    with open(path, "wb") as handle:
        handle.write(header.encode("utf-8"))
        for param in model.parameters():
            handle.write(np.ascontiguousarray(param, dtype="<f8").tobytes())


def load_checkpoint(path) -> RerankModel:
    with open(path, "rb") as handle:
        data = handle.read()
    sep = data.find(b"\n\n")
    if sep < 0:
        raise ValueError(f"{path}: no header/parameter separator found")
    fields: dict[str, str] = {}
    for line in data[:sep].decode("utf-8").splitlines():
        if "=" not in line:
            raise ValueError(f"{path}: malformed header line {line!r}")
        key, value = line.split("=", 1)
        fields[key] = value
    try:
        config = ModelConfig(
            kind=fields["kind"],
            layers=int(fields["layers"]),
            feature_dim=int(fields["feature_dim"]),
            hidden_dim=int(fields["hidden_dim"]),
            individual=fields["individual"],
            scorer_hidden=int(fields["scorer_hidden"]),
            seed=int(fields["seed"]),
            neg_samples=int(fields.get("neg_samples", "8")),
        )
    except KeyError as missing:
        raise ValueError(f"{path}: header missing {missing}") from None
    model = RerankModel(config)
    blob = data[sep + 2 :]
    expected = model.n_parameters() * 8
    if len(blob) != expected:
        raise ValueError(f"{path}: parameter blob is {len(blob)} bytes, expected {expected}")
    flat = np.frombuffer(blob, dtype="<f8")
    offset = 0
    for param in model.parameters():
        param[...] = flat[offset : offset + param.size].reshape(param.shape)
        offset += param.size
    return model
