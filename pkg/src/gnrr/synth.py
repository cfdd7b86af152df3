"""Synthetic retrieval benchmark with planted topical structure.

Documents belong to topics, each split into subtopics with their own small
vocabularies (plus topic-shared and background words). A query samples words
from one subtopic, so lexical retrieval finds the right neighborhood but
with noisy per-document overlap. Graded relevance is planted per query: each
relevant slot stays inside the query's subtopic with probability `homophily`
and falls on a uniformly random document otherwise. At high homophily a
document's graph neighbors (same-subtopic documents, which share vocabulary
and therefore embed nearby) tend to share its relevance — exactly the
structure a graph re-ranker can exploit and a corrupted graph branch loses.

The generator also writes embeddings for documents and queries (the
deterministic bag-of-tokens encoder, one shared token seed), so a full
index/retrieve/graph/train/eval pipeline runs straight off the output
directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import tokenize
from .embeddings import EmbeddingStore, pseudo_encode, save_embeddings

SHARED_WORDS_PER_TOPIC = 10
SUBTOPIC_WORDS = 20
BACKGROUND_WORDS = 500
SUBTOPICS_PER_TOPIC = 5


@dataclass
class SynthSpec:
    n_docs: int
    n_queries: int
    dim: int
    homophily: float
    seed: int
    n_topics: int | None = None  # default: one topic per ~100 documents

    def validate(self) -> None:
        if self.n_docs < 2:
            raise ValueError("need at least 2 documents")
        if self.n_queries < 1:
            raise ValueError("need at least 1 query")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not 0.0 <= self.homophily <= 1.0:
            raise ValueError(f"homophily must lie in [0, 1], got {self.homophily}")

    @property
    def topics(self) -> int:
        if self.n_topics is not None:
            return self.n_topics
        return max(1, self.n_docs // 100)


@dataclass
class SynthData:
    spec: SynthSpec
    docs: list[tuple[str, str]]
    queries: list[tuple[str, str]]
    judgments: dict[tuple[str, str], int]
    doc_subtopic: list[tuple[int, int]]  # (topic, subtopic) per document
    query_subtopic: list[tuple[int, int]]


def _shared_word(topic: int, j: int) -> str:
    return f"t{topic:03d}sh{j:02d}"


def _subtopic_word(topic: int, sub: int, j: int) -> str:
    return f"t{topic:03d}s{sub}w{j:02d}"


def _background_word(j: int) -> str:
    return f"bg{j:03d}"


def generate(spec: SynthSpec) -> SynthData:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_topics = spec.topics
    n_clusters = n_topics * SUBTOPICS_PER_TOPIC

    doc_subtopic: list[tuple[int, int]] = []
    docs: list[tuple[str, str]] = []
    for i in range(spec.n_docs):
        cluster = i % n_clusters
        topic, sub = divmod(cluster, SUBTOPICS_PER_TOPIC)
        doc_subtopic.append((topic, sub))
        words: list[str] = []
        n_shared = int(rng.integers(2, 5))
        for j in rng.integers(0, SHARED_WORDS_PER_TOPIC, size=n_shared):
            words.append(_shared_word(topic, int(j)))
        n_sub = int(rng.integers(8, 16))
        for j in rng.choice(SUBTOPIC_WORDS, size=n_sub, replace=False):
            words.append(_subtopic_word(topic, sub, int(j)))
        n_bg = int(rng.integers(5, 11))
        for j in rng.integers(0, BACKGROUND_WORDS, size=n_bg):
            words.append(_background_word(int(j)))
        rng.shuffle(words)
        docs.append((f"D{i:06d}", " ".join(words)))

    cluster_members: dict[tuple[int, int], list[int]] = {}
    for index, key in enumerate(doc_subtopic):
        cluster_members.setdefault(key, []).append(index)
    topic_members: dict[int, list[int]] = {}
    for index, (topic, _) in enumerate(doc_subtopic):
        topic_members.setdefault(topic, []).append(index)

    queries: list[tuple[str, str]] = []
    query_subtopic: list[tuple[int, int]] = []
    judgments: dict[tuple[str, str], int] = {}
    for qi in range(spec.n_queries):
        topic = int(rng.integers(0, n_topics))
        sub = int(rng.integers(0, SUBTOPICS_PER_TOPIC))
        query_subtopic.append((topic, sub))
        n_words = int(rng.integers(4, 6))
        words = [
            _subtopic_word(topic, sub, int(j))
            for j in rng.choice(SUBTOPIC_WORDS, size=n_words, replace=False)
        ]
        if rng.random() < 0.5:
            words.append(_shared_word(topic, int(rng.integers(0, SHARED_WORDS_PER_TOPIC))))
        rng.shuffle(words)
        query_id = f"Q{qi:04d}"
        queries.append((query_id, " ".join(words)))

        members = cluster_members[(topic, sub)]
        n_rel = int(rng.integers(8, 15))
        count_in = min(int(rng.binomial(n_rel, spec.homophily)), len(members))
        chosen: list[int] = []
        if count_in:
            chosen.extend(int(d) for d in rng.choice(members, size=count_in, replace=False))
        taken = set(chosen)
        while len(chosen) < n_rel:
            candidate = int(rng.integers(0, spec.n_docs))
            if candidate not in taken:
                taken.add(candidate)
                chosen.append(candidate)
        for doc_index in chosen:
            grade = 3 if rng.random() < 0.3 else 2
            judgments[(query_id, docs[doc_index][0])] = grade
        # A few grade-1 marginals, topic-correlated with the same probability.
        n_marginal = int(rng.integers(2, 6))
        for _ in range(n_marginal):
            if rng.random() < spec.homophily:
                pool = topic_members[topic]
                candidate = int(pool[int(rng.integers(0, len(pool)))])
            else:
                candidate = int(rng.integers(0, spec.n_docs))
            if candidate in taken:
                continue
            taken.add(candidate)
            judgments[(query_id, docs[candidate][0])] = 1

    return SynthData(
        spec=spec,
        docs=docs,
        queries=queries,
        judgments=judgments,
        doc_subtopic=doc_subtopic,
        query_subtopic=query_subtopic,
    )


def _encode_all(pairs: list[tuple[str, str]], dim: int, seed: int) -> EmbeddingStore:
    ids = [pair_id for pair_id, _ in pairs]
    matrix = np.empty((len(pairs), dim), dtype=np.float32)
    for i, (_, text) in enumerate(pairs):
        matrix[i] = pseudo_encode(tokenize(text), dim, seed=seed).astype(np.float32)
    return EmbeddingStore(dim=dim, ids=ids, matrix=matrix, normalized=True)


def _write_tsv(pairs: list[tuple[str, str]], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pair_id, text in pairs:
            handle.write(f"{pair_id}\t{text}\n")


def _write_qrels(
    judgments: dict[tuple[str, str], int], query_ids: set[str] | None, path: Path
) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for (query_id, doc_id), grade in sorted(judgments.items()):
            if query_ids is None or query_id in query_ids:
                handle.write(f"{query_id} 0 {doc_id} {grade}\n")


def write_dataset(
    data: SynthData, out_dir, splits: tuple[int, int, int] | None = None
) -> dict[str, Path]:
    """Write all artifacts; returns a name -> path map of what was written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    written["collection"] = out / "collection.tsv"
    _write_tsv(data.docs, written["collection"])
    written["queries"] = out / "queries.tsv"
    _write_tsv(data.queries, written["queries"])
    written["qrels"] = out / "qrels.txt"
    _write_qrels(data.judgments, None, written["qrels"])

    written["embeddings"] = out / "embeddings.bin"
    save_embeddings(_encode_all(data.docs, data.spec.dim, data.spec.seed), written["embeddings"])
    written["query_embeddings"] = out / "query_embeddings.bin"
    save_embeddings(
        _encode_all(data.queries, data.spec.dim, data.spec.seed), written["query_embeddings"]
    )

    if splits is not None:
        train_n, val_n, test_n = splits
        if train_n + val_n + test_n > len(data.queries):
            raise ValueError(
                f"split sizes {splits} exceed the {len(data.queries)} generated queries"
            )
        offsets = {
            "train": (0, train_n),
            "val": (train_n, train_n + val_n),
            "test": (train_n + val_n, train_n + val_n + test_n),
        }
        for name, (lo, hi) in offsets.items():
            part = data.queries[lo:hi]
            written[f"queries_{name}"] = out / f"queries_{name}.tsv"
            _write_tsv(part, written[f"queries_{name}"])
            written[f"qrels_{name}"] = out / f"qrels_{name}.txt"
            _write_qrels(data.judgments, {pair_id for pair_id, _ in part}, written[f"qrels_{name}"])
    return written
