"""Collections, queries, relevance judgments, and TREC-format run files.

File formats:
    collection.tsv  doc_id<TAB>text        (one document per non-empty line)
    queries.tsv     query_id<TAB>text
    qrels.txt       query_id 0 doc_id grade  (whitespace separated)
    run.txt         query_id Q0 doc_id rank score tag
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

# Unicode-aware alphanumeric runs; underscore is a separator.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric character."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Collection:
    """Documents in file order with a dense doc_id -> index mapping."""

    docs: list[tuple[str, str]]
    id_index: dict[str, int]

    def __len__(self) -> int:
        return len(self.docs)

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.docs]

    def text_of(self, doc_id: str) -> str:
        return self.docs[self.id_index[doc_id]][1]


@dataclass
class QuerySet:
    """Queries in file order."""

    queries: list[tuple[str, str]]

    def __len__(self) -> int:
        return len(self.queries)

    def query_ids(self) -> list[str]:
        return [query_id for query_id, _ in self.queries]

    def as_dict(self) -> dict[str, str]:
        return dict(self.queries)


@dataclass
class Qrels:
    """Graded judgments keyed by (query_id, doc_id)."""

    judgments: dict[tuple[str, str], int] = field(default_factory=dict)

    def grade(self, query_id: str, doc_id: str, default: int = 0) -> int:
        return self.judgments.get((query_id, doc_id), default)

    def query_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for query_id, _ in self.judgments:
            seen.setdefault(query_id)
        return list(seen)

    def grades_for(self, query_id: str) -> dict[str, int]:
        return {
            doc_id: grade
            for (qid, doc_id), grade in self.judgments.items()
            if qid == query_id
        }


# One run row: (query_id, doc_id, rank, score, tag).
RunRow = tuple[str, str, int, float, str]


@dataclass
class RunFile:
    """Ranked output lists, at most one block of rows per query."""

    rows: list[RunRow]

    def query_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row[0])
        return list(seen)

    def rows_for(self, query_id: str) -> list[RunRow]:
        return [row for row in self.rows if row[0] == query_id]

    def ranking_for(self, query_id: str) -> list[str]:
        """doc_ids for one query in rank order."""
        rows = sorted(self.rows_for(query_id), key=lambda r: r[2])
        return [row[1] for row in rows]


def _read_lines(path):
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if line:
                yield lineno, line


def _load_tsv_pairs(path, what: str) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    for lineno, line in _read_lines(path):
        if "\t" not in line:
            raise ValueError(f"{path}:{lineno}: malformed {what} line (no TAB)")
        key, text = line.split("\t", 1)
        if key in seen:
            raise ValueError(f"{path}:{lineno}: duplicate {what} id {key!r}")
        seen.add(key)
        pairs.append((key, text))
    return pairs


def load_collection(path) -> Collection:
    docs = _load_tsv_pairs(path, "doc")
    return Collection(docs=docs, id_index={doc_id: i for i, (doc_id, _) in enumerate(docs)})


def load_queries(path) -> QuerySet:
    return QuerySet(queries=_load_tsv_pairs(path, "query"))


def load_qrels(path) -> Qrels:
    judgments: dict[tuple[str, str], int] = {}
    for lineno, line in _read_lines(path):
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 'query_id 0 doc_id grade'")
        query_id, _, doc_id, grade_str = parts
        try:
            grade = int(grade_str)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-integer grade {grade_str!r}") from None
        if grade < 0:
            raise ValueError(f"{path}:{lineno}: negative grade {grade}")
        key = (query_id, doc_id)
        if key in judgments:
            raise ValueError(f"{path}:{lineno}: duplicate judgment for {key}")
        judgments[key] = grade
    return Qrels(judgments=judgments)


def _validate_run_rows(rows: list[RunRow]) -> None:
    by_query: dict[str, list[RunRow]] = {}
    for row in rows:
        by_query.setdefault(row[0], []).append(row)
    for query_id, group in by_query.items():
        group = sorted(group, key=lambda r: r[2])
        doc_ids = [row[1] for row in group]
        if len(set(doc_ids)) != len(doc_ids):
            raise ValueError(f"run for query {query_id!r}: duplicate doc_ids")
        ranks = [row[2] for row in group]
        if ranks != list(range(1, len(group) + 1)):
            raise ValueError(f"run for query {query_id!r}: ranks are not 1..n without gaps")
        scores = [row[3] for row in group]
        for a, b in zip(scores, scores[1:]):
            if b > a:
                raise ValueError(f"run for query {query_id!r}: scores increase with rank")


def write_run(run: RunFile, path) -> None:
    """Write TREC 6-column rows; scores printed with 6 decimal places."""
    _validate_run_rows(run.rows)
    with open(path, "w", encoding="utf-8") as handle:
        for query_id, doc_id, rank, score, tag in run.rows:
            handle.write(f"{query_id} Q0 {doc_id} {rank} {score:.6f} {tag}\n")


def read_run(path) -> RunFile:
    rows: list[RunRow] = []
    for lineno, line in _read_lines(path):
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"{path}:{lineno}: expected 6 run columns")
        query_id, _, doc_id, rank_str, score_str, tag = parts
        try:
            rank = int(rank_str)
            score = float(score_str)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad rank or score") from None
        rows.append((query_id, doc_id, rank, score, tag))
    _validate_run_rows(rows)
    return RunFile(rows=rows)
