"""Sentence vectors: a hashing baseline embedder and a precomputed-vector store.

Every vector that enters a :class:`VectorStore` is rescaled to unit length,
so the dot product is the similarity used everywhere downstream.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .corpus_io import Sentence, key_order, tokenize

DEFAULT_DIMENSION = 512
NORM_TOLERANCE = 1e-6


class VectorFormatError(ValueError):
    pass


def as_unit(values: Sequence[float] | np.ndarray, key: str = "<vector>") -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise VectorFormatError(f"{key}: expected a flat vector")
    if not np.all(np.isfinite(vec)):
        raise VectorFormatError(f"{key}: non-finite component")
    norm = math.sqrt(float(np.dot(vec, vec)))
    if norm == 0.0:
        raise VectorFormatError(f"{key}: zero vector has no direction")
    return vec / norm


SCORE_DECIMALS = 12


def dot_rows(matrix: np.ndarray, q: np.ndarray) -> np.ndarray:
    # Each row is reduced on its own, so a score does not depend on which
    # other rows are scored with it (tree and full scans agree bit for bit).
    # Rounding to a fixed grid keeps mathematically equal scores equal; the
    # last bits otherwise depend on coordinate order and would decide ties.
    return np.round((matrix * q).sum(axis=1), SCORE_DECIMALS)


def similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product of two unit vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    return float(dot_rows(u[None, :], v)[0])


class VectorStore:
    """Unit vectors keyed by sentence key (``"owner#index"``)."""

    def __init__(self, dimension: int, keys: Sequence[str] = (), matrix: np.ndarray | None = None):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.keys = list(keys)
        if matrix is None:
            matrix = np.zeros((0, dimension))
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.shape != (len(self.keys), dimension):
            raise VectorFormatError(f"matrix shape {matrix.shape} does not fit {len(self.keys)} keys x {dimension}")
        self.matrix = matrix
        self.matrix.setflags(write=False)
        self._rows = {}
        for row, key in enumerate(self.keys):
            if key in self._rows:
                raise VectorFormatError(f"duplicate vector key {key!r}")
            self._rows[key] = row

    @classmethod
    def from_items(cls, dimension: int, items: Iterable[tuple[str, Sequence[float]]]) -> "VectorStore":
        keys, rows = [], []
        for key, values in items:
            if len(values) != dimension:
                raise VectorFormatError(f"{key}: expected dimension {dimension}, got {len(values)}")
            keys.append(key)
            rows.append(as_unit(values, key))
        matrix = np.vstack(rows) if rows else np.zeros((0, dimension))
        return cls(dimension, keys, matrix)

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: object) -> bool:
        return key in self._rows

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self.matrix[self._rows[key]]
        except KeyError:
            raise KeyError(f"no vector for {key!r}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self.keys)

    def subset(self, keys: Iterable[str]) -> "VectorStore":
        keys = list(keys)
        rows = [self._rows[k] for k in keys]
        return VectorStore(self.dimension, keys, self.matrix[rows] if rows else None)

    def merged(self, other: "VectorStore") -> "VectorStore":
        if other.dimension != self.dimension:
            raise ValueError("dimension mismatch")
        return VectorStore(self.dimension, self.keys + other.keys, np.vstack([self.matrix, other.matrix]))


def _feature_hash(feature: str) -> int:
    return int.from_bytes(hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest(), "little")


def hashed_features(tokens: Sequence[str], bigrams: bool = True) -> list[str]:
    feats = [f"u:{t}" for t in tokens]
    if bigrams:
        feats.extend(f"b:{a} {b}" for a, b in zip(tokens, tokens[1:]))
    return feats


def feature_bucket(feature: str, dimension: int) -> tuple[int, float]:
    """Bucket index and sign (+1/-1) for one feature."""
    h = _feature_hash(feature)
    return h % dimension, (-1.0 if h >> 63 else 1.0)


class HashingEmbedder:
    """Signed feature hashing of token unigrams and bigrams, L2-normalized."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION, bigrams: bool = True):
        if dimension < 8:
            raise ValueError("dimension must be at least 8")
        self.dimension = dimension
        self.bigrams = bigrams

    def embed(self, sentence: Sentence | str) -> np.ndarray:
        text = sentence.text if isinstance(sentence, Sentence) else sentence
        tokens = tokenize(text)
        if not tokens:
            raise ValueError(f"cannot embed a sentence without tokens: {text!r}")
        vec = np.zeros(self.dimension)
        for feat in hashed_features(tokens, self.bigrams):
            bucket, sign = feature_bucket(feat, self.dimension)
            vec[bucket] += sign
        return as_unit(vec, getattr(sentence, "key", text[:40]))

    def embed_many(self, sentences: Iterable[Sentence]) -> VectorStore:
        sentences = list(sentences)
        matrix = np.vstack([self.embed(s) for s in sentences]) if sentences else None
        return VectorStore(self.dimension, [s.key for s in sentences], matrix)


class PrecomputedEmbedder:
    """Looks sentences up in a store of externally computed vectors."""

    def __init__(self, store: VectorStore):
        self.store = store
        self.dimension = store.dimension

    def embed(self, sentence: Sentence) -> np.ndarray:
        return self.store[sentence.key]

    def embed_many(self, sentences: Iterable[Sentence]) -> VectorStore:
        return self.store.subset(s.key for s in sentences)


def embed_baseline(sentence: Sentence | str, dimension: int = DEFAULT_DIMENSION, bigrams: bool = True) -> np.ndarray:
    return HashingEmbedder(dimension, bigrams).embed(sentence)


def load_vectors(path: str | Path, expected_dimension: int) -> VectorStore:
    """Read a vector file: a ``{"dimension": d}`` header, then ``{"key", "values"}`` lines."""
    path = Path(path)
    items: list[tuple[str, list[float]]] = []
    dimension = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise VectorFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if dimension is None:
                dimension = rec.get("dimension") if isinstance(rec, Mapping) else None
                if not isinstance(dimension, int):
                    raise VectorFormatError(f"{path}:{lineno}: first record must declare an integer dimension")
                if dimension != expected_dimension:
                    raise VectorFormatError(f"{path}: declares dimension {dimension}, expected {expected_dimension}")
                continue
            key, values = rec.get("key"), rec.get("values")
            if not isinstance(key, str) or not isinstance(values, list):
                raise VectorFormatError(f"{path}:{lineno}: record needs 'key' and 'values'")
            try:
                floats = [float(v) for v in values]
            except (TypeError, ValueError):
                raise VectorFormatError(f"{path}:{lineno}: {key}: non-numeric component") from None
            items.append((key, floats))
    return VectorStore.from_items(expected_dimension, items)


def save_vectors(store: VectorStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"dimension": store.dimension}) + "\n")
        for key in sorted(store.keys, key=key_order):
            fh.write(json.dumps({"key": key, "values": store[key].tolist()}) + "\n")
