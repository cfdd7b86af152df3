"""Okapi BM25 over an in-memory inverted index.

Scoring uses the non-negative idf variant

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))

and the classic saturation term with defaults k1=0.9, b=0.4. Documents that
match no query term score 0 and are never retrieved, so a top-K list may hold
fewer than K entries.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass, field

from .corpus import Collection, tokenize

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4

_MAGIC = b"BMI1"

# (doc_id, score) pairs sorted by score descending, doc_id ascending on ties.
ScoredList = list[tuple[str, float]]


@dataclass
class InvertedIndex:
    doc_ids: list[str]
    doc_lengths: list[int]
    postings: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    @property
    def avg_doc_length(self) -> float:
        return sum(self.doc_lengths) / len(self.doc_lengths)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        if df == 0:
            return 0.0
        n = self.n_docs
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def build_index(
    collection: Collection, k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> InvertedIndex:
    if len(collection) == 0:
        raise ValueError("cannot index an empty collection (average length undefined)")
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths: list[int] = []
    for doc_index, (_, text) in enumerate(collection.docs):
        tokens = tokenize(text)
        doc_lengths.append(len(tokens))
        for term, tf in sorted(Counter(tokens).items()):
            postings.setdefault(term, []).append((doc_index, tf))
    return InvertedIndex(
        doc_ids=collection.doc_ids(),
        doc_lengths=doc_lengths,
        postings=postings,
        k1=k1,
        b=b,
    )


def _tf_part(idx: InvertedIndex, tf: int, doc_index: int) -> float:
    dl_ratio = idx.doc_lengths[doc_index] / idx.avg_doc_length
    return tf * (idx.k1 + 1.0) / (tf + idx.k1 * (1.0 - idx.b + idx.b * dl_ratio))


def bm25_score(idx: InvertedIndex, query_tokens: list[str], doc_index: int) -> float:
    """Score one document; repeated query tokens each contribute."""
    score = 0.0
    for term in query_tokens:
        for posting_doc, tf in idx.postings.get(term, ()):
            if posting_doc == doc_index:
                score += idx.idf(term) * _tf_part(idx, tf, doc_index)
                break
    return score


def retrieve_topk(idx: InvertedIndex, query_tokens: list[str], k: int) -> ScoredList:
    """Top-k documents with positive score, ties broken by doc_id ascending."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    accumulator: dict[int, float] = {}
    for term in query_tokens:
        idf = idx.idf(term)
        if idf == 0.0:
            continue
        for doc_index, tf in idx.postings[term]:
            accumulator[doc_index] = accumulator.get(doc_index, 0.0) + idf * _tf_part(
                idx, tf, doc_index
            )
    scored = [
        (idx.doc_ids[doc_index], score)
        for doc_index, score in accumulator.items()
        if score > 0.0
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def retrieve_text(idx: InvertedIndex, query_text: str, k: int) -> ScoredList:
    return retrieve_topk(idx, tokenize(query_text), k)


def save_index(idx: InvertedIndex, path) -> None:
    """Binary layout: magic, k1/b (f64), doc table, doc lengths, postings."""
    with open(path, "wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<dd", idx.k1, idx.b))
        handle.write(struct.pack("<I", idx.n_docs))
        for doc_id in idx.doc_ids:
            encoded = doc_id.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
        handle.write(struct.pack(f"<{idx.n_docs}I", *idx.doc_lengths))
        handle.write(struct.pack("<I", len(idx.postings)))
        for term in sorted(idx.postings):
            encoded = term.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
            plist = idx.postings[term]
            handle.write(struct.pack("<I", len(plist)))
            for doc_index, tf in plist:
                handle.write(struct.pack("<II", doc_index, tf))


def load_index(path) -> InvertedIndex:
    with open(path, "rb") as handle:
        data = handle.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not an index file (bad magic)")
    offset = 4
    k1, b = struct.unpack_from("<dd", data, offset)
    offset += 16
    (n_docs,) = struct.unpack_from("<I", data, offset)
    offset += 4
    doc_ids: list[str] = []
    for _ in range(n_docs):
        (length,) = struct.unpack_from("<H", data, offset)
        offset += 2
        doc_ids.append(data[offset : offset + length].decode("utf-8"))
        offset += length
    doc_lengths = list(struct.unpack_from(f"<{n_docs}I", data, offset))
    offset += 4 * n_docs
    (n_terms,) = struct.unpack_from("<I", data, offset)
    offset += 4
    postings: dict[str, list[tuple[int, int]]] = {}
    for _ in range(n_terms):
        (length,) = struct.unpack_from("<H", data, offset)
        offset += 2
        term = data[offset : offset + length].decode("utf-8")
        offset += length
        (df,) = struct.unpack_from("<I", data, offset)
        offset += 4
        plist: list[tuple[int, int]] = []
        for _ in range(df):
            doc_index, tf = struct.unpack_from("<II", data, offset)
            offset += 8
            plist.append((doc_index, tf))
        postings[term] = plist
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes after postings")
    return InvertedIndex(
        doc_ids=doc_ids, doc_lengths=doc_lengths, postings=postings, k1=k1, b=b
    )
