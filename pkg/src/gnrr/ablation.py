"""Inference-time corruption of the graph branch.

To measure how much the graph branch contributes, its output H_loc is
replaced right before concatenation — zeroed, row-shuffled, or perturbed
with additive Gaussian noise — while the individual branch and scorer run
untouched. The report compares metrics with and without the corruption:
drop = metric(intact) - metric(corrupted).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Qrels, RunFile
from .gnn import RerankModel, rerank_rows
from .metrics import MetricReport, evaluate_run
from .pipeline import QueryInstance, stable_seed

CORRUPTION_MODES = ("zero", "shuffle_rows", "gaussian")


def corrupt_h_loc(
    h_loc: np.ndarray, mode: str, noise_sigma: float = 1.0, seed: int = 0
) -> np.ndarray:
    if mode == "zero":
        return np.zeros_like(h_loc)
    if mode == "shuffle_rows":
        rng = np.random.default_rng(seed)
        return h_loc[rng.permutation(h_loc.shape[0])]
    if mode == "gaussian":
        rng = np.random.default_rng(seed)
        return h_loc + noise_sigma * rng.standard_normal(h_loc.shape)
    raise ValueError(f"unknown corruption mode {mode!r}; choose one of {CORRUPTION_MODES}")


def corrupted_scores(
    model: RerankModel,
    instance: QueryInstance,
    mode: str,
    noise_sigma: float = 1.0,
    seed: int = 0,
) -> np.ndarray:
    """Scores with H_loc replaced per mode; inputs are never modified."""
    h_loc, _ = model.forward_local(instance.x_aug, instance.ctx)
    h_ind, _ = model.forward_individual(instance.x)
    per_query_seed = stable_seed(seed, "ablate", mode, instance.query_id)
    replaced = corrupt_h_loc(h_loc, mode, noise_sigma=noise_sigma, seed=per_query_seed)
    return model.score_parts(h_ind, replaced)


def rerank_corrupted(
    model: RerankModel,
    instance: QueryInstance,
    mode: str,
    noise_sigma: float = 1.0,
    seed: int = 0,
    tag: str = "ablated",
) -> list[tuple[str, str, int, float, str]]:
    scores = corrupted_scores(model, instance, mode, noise_sigma=noise_sigma, seed=seed)
    return rerank_rows(instance.query_id, instance.doc_ids, scores, tag)


def _run_for(
    model: RerankModel,
    instances: list[QueryInstance],
    mode: str | None,
    noise_sigma: float,
    seed: int,
    tag: str,
) -> RunFile:
    rows = []
    for instance in instances:
        if mode is None:
            state = model.score(instance.x, instance.x_aug, instance.ctx)
            scores = state.scores
        else:
            scores = corrupted_scores(model, instance, mode, noise_sigma, seed)
        rows.extend(rerank_rows(instance.query_id, instance.doc_ids, scores, tag))
    return RunFile(rows=rows)


@dataclass
class AblationRow:
    mode: str
    metric: str
    with_gnn: float
    without_gnn: float

    @property
    def drop(self) -> float:
        return self.with_gnn - self.without_gnn


@dataclass
class AblationReport:
    rows: list[AblationRow]

    def as_csv(self) -> str:
        lines = ["mode,metric,with_gnn,without_gnn,drop"]
        for row in self.rows:
            lines.append(
                f"{row.mode},{row.metric},{row.with_gnn:.6f},"
                f"{row.without_gnn:.6f},{row.drop:.6f}"
            )
        return "\n".join(lines) + "\n"

    def value(self, mode: str, metric: str) -> AblationRow:
        for row in self.rows:
            if row.mode == mode and row.metric == metric:
                return row
        raise KeyError(f"no ablation row for ({mode}, {metric})")


def ablation_report(
    model: RerankModel,
    instances: list[QueryInstance],
    qrels: Qrels,
    modes: list[str],
    noise_sigma: float = 1.0,
    seed: int = 0,
    p_k: int = 3,
    ndcg_k: int = 10,
) -> AblationReport:
    """Metric table per corruption mode against the intact model."""
    for mode in modes:
        if mode not in CORRUPTION_MODES:
            raise ValueError(f"unknown corruption mode {mode!r}")
    intact_run = _run_for(model, instances, None, noise_sigma, seed, "intact")
    intact: MetricReport = evaluate_run(intact_run, qrels, p_k=p_k, ndcg_k=ndcg_k)
    rows: list[AblationRow] = []
    for mode in modes:
        corrupted_run = _run_for(model, instances, mode, noise_sigma, seed, f"ablate-{mode}")
        corrupted = evaluate_run(corrupted_run, qrels, p_k=p_k, ndcg_k=ndcg_k)
        for metric in intact.metric_names():
            rows.append(
                AblationRow(
                    mode=mode,
                    metric=metric,
                    with_gnn=intact.means[metric],
                    without_gnn=corrupted.means[metric],
                )
            )
    return AblationReport(rows=rows)
