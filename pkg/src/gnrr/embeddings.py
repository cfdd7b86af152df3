"""Dense vector stores and a deterministic stand-in text encoder.

Vectors live on disk as 32-bit floats and are promoted to 64-bit for all
numerical work. The pseudo-encoder is a bag-of-tokens hash encoder: each
token maps to a fixed random direction via a counter-based generator, and a
text encodes to the unit-normalized sum of its token vectors. Texts sharing
tokens therefore land near each other, which is all downstream graph
construction needs.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_MAGIC = b"EMB1"
_MASK64 = (1 << 64) - 1


@dataclass
class EmbeddingStore:
    dim: int
    ids: list[str]
    matrix: np.ndarray  # (n, dim) float32
    normalized: bool = False

    def __post_init__(self):
        self.id_index = {vec_id: i for i, vec_id in enumerate(self.ids)}
        if len(self.id_index) != len(self.ids):
            raise ValueError("duplicate ids in embedding store")
        if self.matrix.shape != (len(self.ids), self.dim):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match "
                f"({len(self.ids)}, {self.dim})"
            )

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, vec_id: str) -> bool:
        return vec_id in self.id_index

    def vector(self, vec_id: str) -> np.ndarray:
        """One vector, promoted to float64."""
        return self.matrix[self.id_index[vec_id]].astype(np.float64)

    def matrix_for(self, ids: list[str]) -> np.ndarray:
        """Stacked float64 rows in the order given."""
        rows = [self.id_index[vec_id] for vec_id in ids]
        return self.matrix[rows].astype(np.float64)

    def normalize(self) -> None:
        """L2-normalize every row in place and mark the store normalized."""
        norms = np.linalg.norm(self.matrix.astype(np.float64), axis=1)
        if np.any(norms == 0.0):
            raise ValueError("cannot normalize a zero vector")
        self.matrix = (self.matrix / norms[:, None]).astype(np.float32)
        self.normalized = True


def _token_key(token: str, seed: int) -> list[int]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return [int.from_bytes(digest, "little"), seed & _MASK64]


@lru_cache(maxsize=65536)
def _token_vector_cached(token: str, dim: int, seed: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=_token_key(token, seed)))
    vector = gen.standard_normal(dim)
    vector.flags.writeable = False
    return vector


def token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    """Fixed pseudo-random direction for one token (not normalized)."""
    return _token_vector_cached(token, dim, seed)


def pseudo_encode(tokens: list[str], dim: int, seed: int = 0) -> np.ndarray:
    """Unit-norm float64 encoding of a token multiset."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if not tokens:
        raise ValueError("cannot encode empty text (zero vector has no direction)")
    total = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        total += token_vector(token, dim, seed)
    norm = np.linalg.norm(total)
    if norm == 0.0:
        # Astronomically unlikely (token vectors are continuous), but the
        # contract is a unit vector or an error.
        raise ValueError("token vectors cancelled exactly; cannot normalize")
    return total / norm


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    norm_u = np.linalg.norm(u)
    norm_v = np.linalg.norm(v)
    if norm_u == 0.0 or norm_v == 0.0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.dot(u, v) / (norm_u * norm_v))


def save_embeddings(store: EmbeddingStore, path) -> None:
    with open(path, "wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<IIB", len(store), store.dim, int(store.normalized)))
        for i, vec_id in enumerate(store.ids):
            encoded = vec_id.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
            handle.write(store.matrix[i].astype("<f4").tobytes())


def load_embeddings(path) -> EmbeddingStore:
    with open(path, "rb") as handle:
        data = handle.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not an embedding file (bad magic)")
    if len(data) < 13:
        raise ValueError(f"{path}: truncated header")
    count, dim, normalized = struct.unpack_from("<IIB", data, 4)
    offset = 13
    ids: list[str] = []
    matrix = np.empty((count, dim), dtype=np.float32)
    record_bytes = 4 * dim
    for i in range(count):
        if offset + 2 > len(data):
            raise ValueError(f"{path}: truncated at record {i}")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + id_len + record_bytes > len(data):
            raise ValueError(f"{path}: truncated at record {i}")
        ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        matrix[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += record_bytes
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes after last record")
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{path}: non-finite vector values")
    return EmbeddingStore(dim=dim, ids=ids, matrix=matrix, normalized=bool(normalized))
