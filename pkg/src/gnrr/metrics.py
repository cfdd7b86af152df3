"""Ranking quality metrics: AP, RR, P@k, nDCG@k.

AP, RR, and P@k binarize relevance at grade >= 2; nDCG stays graded with
linear gain and a log2(i+1) discount, ideal DCG computed from the query's
judged grades sorted descending. Unjudged documents count as grade 0.

Macro-averages skip a query for AP when it has no relevant documents, and
for nDCG when every judged grade is zero; RR and P@k always count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import Qrels, RunFile

RELEVANT_GRADE = 2


def _grades_in_ranking(ranking: list[str], qrels: Qrels, query_id: str) -> list[int]:
    return [qrels.grade(query_id, doc_id) for doc_id in ranking]


def ap(ranking: list[str], qrels: Qrels, query_id: str) -> float:
    """Average precision; 0.0 when the query has no relevant documents."""
    total_relevant = sum(
        1 for grade in qrels.grades_for(query_id).values() if grade >= RELEVANT_GRADE
    )
    if total_relevant == 0:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for position, grade in enumerate(_grades_in_ranking(ranking, qrels, query_id), start=1):
        if grade >= RELEVANT_GRADE:
            hits += 1
            precision_sum += hits / position
    return precision_sum / total_relevant


def rr(ranking: list[str], qrels: Qrels, query_id: str) -> float:
    for position, grade in enumerate(_grades_in_ranking(ranking, qrels, query_id), start=1):
        if grade >= RELEVANT_GRADE:
            return 1.0 / position
    return 0.0


def precision_at_k(ranking: list[str], qrels: Qrels, query_id: str, k: int) -> float:
    """Relevant fraction of the top k; short rankings count as padded."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    grades = _grades_in_ranking(ranking[:k], qrels, query_id)
    return sum(1 for grade in grades if grade >= RELEVANT_GRADE) / k


def dcg(gains: list[float], k: int | None = None) -> float:
    if k is not None:
        gains = gains[:k]
    return sum(gain / math.log2(position + 1) for position, gain in enumerate(gains, start=1))


def ndcg_from_grades(predicted_grades: list[int], ideal_grades: list[int], k: int) -> float:
    """nDCG@k given grades in predicted order and the query's judged grades."""
    ideal = dcg(sorted((float(g) for g in ideal_grades), reverse=True), k)
    if ideal == 0.0:
        return 0.0
    return dcg([float(g) for g in predicted_grades], k) / ideal


def ndcg_at_k(ranking: list[str], qrels: Qrels, query_id: str, k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    predicted = _grades_in_ranking(ranking, qrels, query_id)
    ideal = list(qrels.grades_for(query_id).values())
    return ndcg_from_grades(predicted, ideal, k)


@dataclass
class MetricReport:
    p_k: int
    ndcg_k: int
    # metric name -> query_id -> value; skipped queries are absent.
    per_query: dict[str, dict[str, float]]
    means: dict[str, float]
    n_queries: int

    def metric_names(self) -> list[str]:
        return ["ap", "rr", f"p@{self.p_k}", f"ndcg@{self.ndcg_k}"]

    def as_csv(self) -> str:
        lines = ["metric,query_id,value"]
        for metric in self.metric_names():
            for query_id in sorted(self.per_query[metric]):
                lines.append(f"{metric},{query_id},{self.per_query[metric][query_id]:.6f}")
        for metric in self.metric_names():
            lines.append(f"{metric},ALL,{self.means[metric]:.6f}")
        return "\n".join(lines) + "\n"

    def as_table(self) -> str:
        names = self.metric_names()
        width = max(len(name) for name in names)
        lines = [f"queries evaluated: {self.n_queries}"]
        for metric in names:
            count = len(self.per_query[metric])
            lines.append(f"{metric:<{width}}  {self.means[metric]:.4f}  (over {count} queries)")
        return "\n".join(lines) + "\n"


def evaluate_run(
    run: RunFile, qrels: Qrels, p_k: int = 3, ndcg_k: int = 10
) -> MetricReport:
    """Macro-averaged metrics over the qrels queries.

    Queries judged but absent from the run score 0 where they are counted at
    all; the skip rules above decide which macro-averages include them.
    """
    qrels_queries = qrels.query_ids()
    run_queries = set(run.query_ids())
    if not run_queries & set(qrels_queries):
        raise ValueError("run and qrels share no queries")

    names = ["ap", "rr", f"p@{p_k}", f"ndcg@{ndcg_k}"]
    per_query: dict[str, dict[str, float]] = {name: {} for name in names}
    for query_id in qrels_queries:
        ranking = run.ranking_for(query_id) if query_id in run_queries else []
        judged = qrels.grades_for(query_id)
        has_relevant = any(grade >= RELEVANT_GRADE for grade in judged.values())
        has_any_gain = any(grade > 0 for grade in judged.values())
        if has_relevant:
            per_query["ap"][query_id] = ap(ranking, qrels, query_id)
        per_query["rr"][query_id] = rr(ranking, qrels, query_id)
        per_query[f"p@{p_k}"][query_id] = precision_at_k(ranking, qrels, query_id, p_k)
        if has_any_gain:
            per_query[f"ndcg@{ndcg_k}"][query_id] = ndcg_at_k(ranking, qrels, query_id, ndcg_k)

    means = {
        name: (sum(values.values()) / len(values) if values else 0.0)
        for name, values in per_query.items()
    }
    return MetricReport(
        p_k=p_k,
        ndcg_k=ndcg_k,
        per_query=per_query,
        means=means,
        n_queries=len(qrels_queries),
    )
