"""Embedding vectors for the defense: a strict JSONL vector loader/writer
and a deterministic synthetic embedder so the pipeline runs with no model.

The synthetic embedder is a bag-of-tokens sum of seeded pseudo-random unit
vectors. It carries no semantics, but it gives perturbed texts measurably
different geometry, which is all the outlier defense needs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import derive


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    row_ids: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "row_ids", tuple(int(i) for i in self.row_ids))
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise EmbeddingError(f"expected a 2-D matrix, got shape {data.shape}")
        n, d = data.shape
        if len(self.row_ids) != n:
            raise EmbeddingError(f"{len(self.row_ids)} row ids for {n} rows")
        if len(set(self.row_ids)) != n:
            raise EmbeddingError("duplicate row ids")
        if d < 2:
            raise EmbeddingError(f"dimension must be >= 2, got {d}")
        if not np.isfinite(data).all():
            bad = int(np.argwhere(~np.isfinite(data).all(axis=1))[0][0])
            raise EmbeddingError(f"non-finite value in row id {self.row_ids[bad]}")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def select_ids(self, ids: list[int]) -> "EmbeddingMatrix":
        index = {row_id: i for i, row_id in enumerate(self.row_ids)}
        missing = [i for i in ids if i not in index]
        if missing:
            raise EmbeddingError(f"row ids not in matrix: {missing[:5]}")
        rows = np.stack([self.data[index[i]] for i in ids])
        return EmbeddingMatrix(row_ids=tuple(ids), data=rows)


def load_vectors(path: str | Path) -> EmbeddingMatrix:
    """Load a JSONL vector file; the first row fixes the dimension."""
    row_ids: list[int] = []
    rows: list[list[float]] = []
    d: int | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingError(f"malformed vector line {line_no}: {exc.msg}") from None
            if not isinstance(obj, dict) or "id" not in obj or "vector" not in obj:
                raise EmbeddingError(f"malformed vector line {line_no}: need 'id' and 'vector'")
            row_id = obj["id"]
            vector = obj["vector"]
            if not isinstance(row_id, int):
                raise EmbeddingError(f"malformed vector line {line_no}: id must be an integer")
            if d is None:
                d = len(vector)
            elif len(vector) != d:
                raise EmbeddingError(f"dimension mismatch at row id {row_id}: expected {d}, got {len(vector)}")
            values = [float(v) for v in vector]
            if not all(np.isfinite(values)):
                raise EmbeddingError(f"non-finite value at row id {row_id}")
            row_ids.append(row_id)
            rows.append(values)
    if not rows:
        raise EmbeddingError(f"empty vector file: {path}")
    return EmbeddingMatrix(row_ids=tuple(row_ids), data=np.array(rows, dtype=np.float64))


def write_vectors(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write the canonical JSONL form; write(load(f)) is byte-identical for
    canonical files because float repr round-trips."""
    with open(path, "w", encoding="utf-8") as fh:
        for row_id, row in zip(matrix.row_ids, matrix.data):
            fh.write(json.dumps({"id": row_id, "vector": [float(v) for v in row]}) + "\n")


def _token_vector(token: str, d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(derive(seed, "token", token))
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def synthetic_embed(
    texts: list[str],
    d: int = 32,
    seed: int = 0,
    row_ids: list[int] | None = None,
) -> EmbeddingMatrix:
    """Embed each text as the L2-normalized sum of per-token unit vectors.

    Token vectors depend only on (token, seed), so identical texts map to
    identical rows and the mapping is a pure function. Empty text maps to
    the first basis vector.
    """
    if d < 2:
        raise EmbeddingError(f"dimension must be >= 2, got {d}")
    if row_ids is None:
        row_ids = list(range(len(texts)))
    if len(row_ids) != len(texts):
        raise EmbeddingError("row_ids and texts length mismatch")
    cache: dict[str, np.ndarray] = {}
    rows = np.zeros((len(texts), d), dtype=np.float64)
    for i, text in enumerate(texts):
        tokens = text.split()
        if not tokens:
            rows[i, 0] = 1.0
            continue
        total = np.zeros(d, dtype=np.float64)
        for token in tokens:
            vec = cache.get(token)
            if vec is None:
                vec = _token_vector(token, d, seed)
                cache[token] = vec
            total += vec
        norm = np.linalg.norm(total)
        if norm == 0.0:
            rows[i, 0] = 1.0
        else:
            rows[i] = total / norm
    return EmbeddingMatrix(row_ids=tuple(row_ids), data=rows)


@dataclass(frozen=True)
class EmbeddingProvider:
    """Where defense vectors come from: a synthetic embedder or a file."""

    kind: str = "synthetic"
    path: str | None = None
    dimension: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("synthetic", "file"):
            raise EmbeddingError(f"unknown embedding provider kind {self.kind!r}")
        if (self.kind == "file") != (self.path is not None):
            raise EmbeddingError("path must be set exactly when kind is 'file'")

    def embed(self, texts: list[str], row_ids: list[int]) -> EmbeddingMatrix:
        """Vectors for the given rows. The file provider looks rows up by id
        and ignores the texts (they were encoded externally)."""
        if self.kind == "synthetic":
            return synthetic_embed(texts, d=self.dimension, seed=self.seed, row_ids=row_ids)
        return load_vectors(self.path).select_ids(row_ids)
