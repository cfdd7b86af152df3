"""Pairwise listwise-weighted training with Adam and early stopping.

The loss is the RankNet-style pairwise cost weighted per pair by the nDCG
swap delta (the LambdaRank construction): for every candidate pair with
grade_i > grade_j,

    lambda_ij = -sigma / (1 + exp(sigma (s_i - s_j))) * |delta nDCG_ij|,

accumulated into ds_i (and -lambda into ds_j), where the swap delta uses the
documents' positions in the current predicted order and is normalized by the
ideal DCG of the full candidate list. Updates are per query (batch size 1)
under the descent convention s <- s - lr * ds.

Early stopping watches validation nDCG@10 and restores the best epoch's
parameters.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .gnn import RerankModel, rerank_order
from .metrics import ndcg_from_grades
from .pipeline import QueryInstance


def _swap_deltas(scores: np.ndarray, grades: np.ndarray) -> np.ndarray:
    """|delta nDCG| for every pair at the current predicted positions."""
    n = len(scores)
    # Predicted positions, ties broken by original index for determinism.
    order = np.lexsort((np.arange(n), -scores))
    positions = np.empty(n, dtype=np.float64)
    positions[order] = np.arange(1, n + 1, dtype=np.float64)
    ideal = np.sort(grades)[::-1]
    idcg = float(np.sum(ideal / np.log2(np.arange(2, n + 2))))
    if idcg == 0.0:
        return np.zeros((n, n))
    discounts = 1.0 / np.log2(positions + 1.0)
    grade_gap = np.abs(grades[:, None] - grades[None, :])
    discount_gap = np.abs(discounts[:, None] - discounts[None, :])
    return grade_gap * discount_gap / idcg


def lambdarank_gradients(
    scores: np.ndarray, grades: np.ndarray, sigma: float = 1.0
) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    grades = np.asarray(grades, dtype=np.float64)
    if scores.shape != grades.shape:
        raise ValueError(f"scores {scores.shape} and grades {grades.shape} differ")
    wins = grades[:, None] > grades[None, :]
    if not wins.any():
        return np.zeros_like(scores)
    deltas = _swap_deltas(scores, grades)
    score_diff = scores[:, None] - scores[None, :]
    lam = np.where(wins, -sigma / (1.0 + np.exp(sigma * score_diff)) * deltas, 0.0)
    return lam.sum(axis=1) - lam.sum(axis=0)


def lambdarank_loss(scores: np.ndarray, grades: np.ndarray, sigma: float = 1.0) -> float:
    """The cost whose score-gradient (deltas held fixed) is lambdarank_gradients."""
    scores = np.asarray(scores, dtype=np.float64)
    grades = np.asarray(grades, dtype=np.float64)
    wins = grades[:, None] > grades[None, :]
    if not wins.any():
        return 0.0
    deltas = _swap_deltas(scores, grades)
    score_diff = scores[:, None] - scores[None, :]
    pair_costs = np.where(wins, deltas * np.log1p(np.exp(-sigma * score_diff)), 0.0)
    return float(pair_costs.sum())


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 30
    patience: int = 5
    seed: int = 0
    sigma: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    ndcg_k: int = 10

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.patience < 1:
            raise ValueError("patience must be positive")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p, dtype=np.float64) for p in params],
            v=[np.zeros_like(p, dtype=np.float64) for p in params],
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> None:
    """Standard bias-corrected Adam; updates parameters in place."""
    state.t += 1
    correction1 = 1.0 - config.beta1**state.t
    correction2 = 1.0 - config.beta2**state.t
    for param, grad, m, v in zip(params, grads, state.m, state.v):
        grad = np.asarray(grad, dtype=np.float64)
        m *= config.beta1
        m += (1.0 - config.beta1) * grad
        v *= config.beta2
        v += (1.0 - config.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_ndcg: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""
    ndcg_k: int = 10

    @property
    def best_val_ndcg(self) -> float:
        return self.epochs[self.best_epoch - 1].val_ndcg if self.best_epoch else 0.0

    def to_csv(self) -> str:
        lines = [f"epoch,loss,val_ndcg{self.ndcg_k}"]
        for record in self.epochs:
            lines.append(f"{record.epoch},{record.train_loss:.6f},{record.val_ndcg:.6f}")
        return "\n".join(lines) + "\n"


def _instance_scores(model: RerankModel, instance: QueryInstance) -> np.ndarray:
    return model.score(instance.x, instance.x_aug, instance.ctx).scores


def validation_ndcg(
    model: RerankModel, instances: list[QueryInstance], k: int
) -> float:
    """Macro nDCG@k over instances with any judged gain."""
    values = []
    for instance in instances:
        if not any(grade > 0 for grade in instance.ideal_grades):
            continue
        scores = _instance_scores(model, instance)
        order = rerank_order(scores, instance.sub.doc_ids)
        predicted = [int(instance.grades[i]) for i in order]
        values.append(ndcg_from_grades(predicted, instance.ideal_grades, k))
    return sum(values) / len(values) if values else 0.0


def train(
    model: RerankModel,
    train_instances: list[QueryInstance],
    val_instances: list[QueryInstance],
    config: TrainConfig,
) -> tuple[RerankModel, TrainReport]:
    """Per-query updates, seeded shuffling, and best-epoch restoration."""
    config.validate()
    if not train_instances:
        raise ValueError("no training instances")
    if not val_instances:
        raise ValueError("no validation instances")

    params = model.parameters()
    adam = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed)
    report = TrainReport(ndcg_k=config.ndcg_k)
    best_params: list[np.ndarray] | None = None
    best_ndcg = -np.inf
    epochs_since_best = 0
    stop_reason = "epoch budget exhausted"

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_instances))
        total_loss = 0.0
        for index in order:
            instance = train_instances[index]
            state = model.score(instance.x, instance.x_aug, instance.ctx)
            grades = instance.grades
            ds = lambdarank_gradients(state.scores, grades, config.sigma)
            total_loss += lambdarank_loss(state.scores, grades, config.sigma)
            if not np.any(ds):
                continue
            grads = model.backward(state, ds)
            adam_step(params, grads, adam, config)

        val = validation_ndcg(model, val_instances, config.ndcg_k)
        report.epochs.append(
            EpochRecord(epoch=epoch, train_loss=total_loss / len(train_instances), val_ndcg=val)
        )
        if val > best_ndcg:
            best_ndcg = val
            report.best_epoch = epoch
            best_params = [param.copy() for param in params]
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                stop_reason = f"no improvement for {config.patience} epochs"
                break

    report.stop_reason = stop_reason
    if best_params is not None:
        for param, best in zip(params, best_params):
            param[...] = best
    return model, report


def clone_model(model: RerankModel) -> RerankModel:
    """Independent copy with identical parameters."""
    twin = RerankModel(copy.deepcopy(model.config))
    for dst, src in zip(twin.parameters(), model.parameters()):
        dst[...] = src
    return twin
