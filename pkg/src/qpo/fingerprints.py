"""Sparse count fingerprints, Tanimoto similarity and candidate-pool ingestion.

Two count generalizations of Tanimoto are supported:

* ``"minmax"`` (default): sum(min(a, b)) / sum(max(a, b)).
* ``"dot"``: <a, b> / (|a|^2 + |b|^2 - <a, b>).

Both reduce to Jaccard similarity on binary vectors. Two all-zero vectors
have similarity 1, an all-zero vector against a nonzero one has similarity 0.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, UsageError

SIMILARITY_KINDS = ("minmax", "dot")

# Above this count the level decomposition costs more than broadcasting.
_MAX_LEVELS = 32


@dataclass(frozen=True, eq=False)
class CountFingerprint:
    """Sparse nonnegative integer vector of fixed dimension."""

    indices: np.ndarray
    counts: np.ndarray
    dimension: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        cnt = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if self.dimension <= 0:
            raise UsageError(f"dimension must be positive, got {self.dimension}")
        if idx.shape != cnt.shape:
            raise UsageError("indices and counts differ in length")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise UsageError("fingerprint indices must be strictly increasing")
            if idx[0] < 0 or idx[-1] >= self.dimension:
                raise UsageError(f"fingerprint index out of range [0, {self.dimension})")
            if np.any(cnt < 1):
                raise UsageError("fingerprint counts must be >= 1")
        idx.setflags(write=False)
        cnt.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "counts", cnt)

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[int, int]], dimension: int) -> "CountFingerprint":
        pairs = sorted(entries)
        if not pairs:
            return cls(np.empty(0, np.int64), np.empty(0, np.int64), dimension)
        idx, cnt = zip(*pairs)
        return cls(np.array(idx), np.array(cnt), dimension)

    @classmethod
    def from_dense(cls, vector: Sequence[int]) -> "CountFingerprint":
        v = np.asarray(vector)
        if v.ndim != 1 or v.size == 0:
            raise UsageError("dense fingerprint must be a nonempty 1-D vector")
        if np.any(v < 0):
            raise UsageError("fingerprint counts must be nonnegative")
        nz = np.flatnonzero(v)
        return cls(nz, v[nz].astype(np.int64), int(v.size))

    @property
    def entries(self) -> list[tuple[int, int]]:
        return list(zip(self.indices.tolist(), self.counts.tolist()))

    @property
    def is_empty(self) -> bool:
        return self.indices.size == 0

    def to_dense(self, dtype=np.int64) -> np.ndarray:
        out = np.zeros(self.dimension, dtype=dtype)
        out[self.indices] = self.counts
        return out

    def __eq__(self, other):
        if not isinstance(other, CountFingerprint):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.counts, other.counts)
        )

    def __hash__(self):
        return hash((self.dimension, self.indices.tobytes(), self.counts.tobytes()))

    def __len__(self):
        return int(self.indices.size)


@dataclass
class CandidatePool:
    """Indexed design space. Row order defines candidate indices."""

    candidates: list[CountFingerprint]
    dimension: int
    ids: list[str] | None = None
    oracle_values: np.ndarray | None = None
    _dense_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for i, fp in enumerate(self.candidates):
            if fp.dimension != self.dimension:
                raise UsageError(
                    f"candidate {i} has dimension {fp.dimension}, pool dimension is {self.dimension}"
                )
        if self.ids is not None and len(self.ids) != len(self.candidates):
            raise UsageError("ids length does not match candidate count")
        if self.oracle_values is not None:
            vals = np.asarray(self.oracle_values, dtype=np.float64).reshape(-1)
            if vals.size != len(self.candidates):
                raise UsageError("oracle_values length does not match candidate count")
            if not np.all(np.isfinite(vals)):
                raise UsageError("oracle_values must be finite")
            self.oracle_values = vals

    def __len__(self):
        return len(self.candidates)

    @property
    def has_oracle(self) -> bool:
        return self.oracle_values is not None

    def check_indices(self, subset) -> np.ndarray:
        idx = np.asarray(subset, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= len(self)):
            raise UsageError(f"candidate index out of range [0, {len(self)})")
        return idx

    def dense(self, subset=None) -> np.ndarray:
        """Dense float64 count matrix for ``subset`` (all candidates if None)."""
        if subset is None:
            subset = np.arange(len(self))
        idx = self.check_indices(subset)
        if self._dense_cache is not None:
            return self._dense_cache[idx]
        out = np.zeros((idx.size, self.dimension), dtype=np.float64)
        for row, i in enumerate(idx):
            fp = self.candidates[i]
            out[row, fp.indices] = fp.counts
        return out

    def cache_dense(self) -> None:
        """Materialize the full dense matrix. Only sensible for small pools."""
        self._dense_cache = None
        self._dense_cache = self.dense()


def tanimoto(a: CountFingerprint, b: CountFingerprint, kind: str = "minmax") -> float:
    """Tanimoto similarity between two count fingerprints.

    Examples
    --------
    >>> a = CountFingerprint.from_entries([(0, 1), (1, 1)], 4)
    >>> b = CountFingerprint.from_entries([(0, 1), (2, 1)], 4)
    >>> round(tanimoto(a, b), 6)
    0.333333
    """
    if a.dimension != b.dimension:
        raise UsageError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    if kind not in SIMILARITY_KINDS:
        raise UsageError(f"unknown similarity kind {kind!r}; expected one of {SIMILARITY_KINDS}")
    if a.is_empty and b.is_empty:
        return 1.0
    common, ia, ib = np.intersect1d(a.indices, b.indices, assume_unique=True, return_indices=True)
    ca, cb = a.counts[ia], b.counts[ib]
    if kind == "minmax":
        inter = int(np.minimum(ca, cb).sum())
        union = int(a.counts.sum() + b.counts.sum()) - inter
        return inter / union
    dot = int((ca * cb).sum())
    denom = int((a.counts**2).sum() + (b.counts**2).sum()) - dot
    return dot / denom


def tanimoto_matrix(A: np.ndarray, B: np.ndarray, kind: str = "minmax") -> np.ndarray:
    """Cross-similarity between rows of two dense count matrices.

    For min-max similarity on small integer counts the numerator is assembled
    from threshold indicators, sum_t [a >= t][b >= t], so every term is a
    matrix product.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise UsageError(f"incompatible shapes {A.shape} and {B.shape}")
    if kind not in SIMILARITY_KINDS:
        raise UsageError(f"unknown similarity kind {kind!r}; expected one of {SIMILARITY_KINDS}")
    if kind == "minmax":
        top = max(A.max(initial=0.0), B.max(initial=0.0))
        if top <= _MAX_LEVELS:
            inter = np.zeros((A.shape[0], B.shape[0]))
            for t in range(1, int(top) + 1):
                inter += (A >= t).astype(np.float64) @ (B >= t).astype(np.float64).T
        else:
            inter = np.empty((A.shape[0], B.shape[0]))
            for i in range(A.shape[0]):
                inter[i] = np.minimum(A[i], B).sum(axis=1)
        union = A.sum(axis=1)[:, None] + B.sum(axis=1)[None, :] - inter
    else:
        inter = A @ B.T
        union = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - inter
    out = np.ones_like(inter)
    nz = union > 0
    np.divide(inter, union, out=out, where=nz)
    return out


def pairwise_tanimoto(pool: CandidatePool, subset, kind: str = "minmax") -> np.ndarray:
    idx = pool.check_indices(subset)
    X = pool.dense(idx)
    S = tanimoto_matrix(X, X, kind)
    S = 0.5 * (S + S.T)
    return S


# ---------------------------------------------------------------------------
# Delimited-text ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoolSchema:
    """Column mapping for :func:`load_pool`.

    The fingerprint column's header name declares the layout: ``sparse_col``
    holds space-separated ``index:count`` tokens, ``dense_col`` holds a
    comma-separated list of counts (quoted, since the file is comma-delimited).
    """

    id_col: str = "id"
    sparse_col: str = "fp_sparse"
    dense_col: str = "fp_dense"
    objective_col: str = "objective"
    delimiter: str = ","


def _parse_sparse(text: str, dimension: int, row: int) -> CountFingerprint:
    entries = {}
    for tok in text.split():
        head, sep, tail = tok.partition(":")
        if not sep:
            raise ParseError(f"malformed token {tok!r}, expected index:count", row)
        try:
            i, c = int(head), int(tail)
        except ValueError:
            raise ParseError(f"malformed token {tok!r}", row) from None
        if c < 1:
            raise ParseError(f"count must be >= 1 in token {tok!r}", row)
        if not 0 <= i < dimension:
            raise ParseError(f"index {i} out of range [0, {dimension})", row)
        if i in entries:
            raise ParseError(f"duplicate index {i}", row)
        entries[i] = c
    return CountFingerprint.from_entries(entries.items(), dimension)


def _parse_dense(text: str, dimension: int, row: int) -> CountFingerprint:
    parts = [p for p in text.replace(",", " ").split()]
    if len(parts) != dimension:
        raise ParseError(f"dense fingerprint has {len(parts)} entries, expected {dimension}", row)
    try:
        vec = np.array([int(p) for p in parts], dtype=np.int64)
    except ValueError:
        raise ParseError("non-integer entry in dense fingerprint", row) from None
    if np.any(vec < 0):
        raise ParseError("negative count in dense fingerprint", row)
    return CountFingerprint.from_dense(vec)


def load_pool(source, dimension: int, schema: PoolSchema | None = None) -> CandidatePool:
    """Read a candidate pool from delimited text.

    ``source`` may be a path or an open text stream. Row numbers in errors
    count the header as row 1.
    """
    schema = schema or PoolSchema()
    if dimension <= 0:
        raise UsageError("dimension must be a positive integer")
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return _load_stream(fh, dimension, schema)
    return _load_stream(source, dimension, schema)


def _load_stream(stream, dimension: int, schema: PoolSchema) -> CandidatePool:
    reader = csv.reader(stream, delimiter=schema.delimiter, skipinitialspace=True)
    header = None
    for header in reader:
        if any(cell.strip() for cell in header):
            break
    else:
        return CandidatePool([], dimension)
    header = [h.strip() for h in header]
    if schema.sparse_col in header:
        fp_col, parse = header.index(schema.sparse_col), _parse_sparse
    elif schema.dense_col in header:
        fp_col, parse = header.index(schema.dense_col), _parse_dense
    else:
        raise ParseError(
            f"header must contain a {schema.sparse_col!r} or {schema.dense_col!r} column", 1
        )
    id_col = header.index(schema.id_col) if schema.id_col in header else None
    obj_col = header.index(schema.objective_col) if schema.objective_col in header else None

    fps, ids, vals = [], [], []
    for rownum, cells in enumerate(reader, start=2):
        if not any(c.strip() for c in cells):
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", rownum)
        fps.append(parse(cells[fp_col], dimension, rownum))
        if id_col is not None:
            ids.append(cells[id_col].strip())
        if obj_col is not None:
            try:
                v = float(cells[obj_col])
            except ValueError:
                raise ParseError(f"objective {cells[obj_col]!r} is not a number", rownum) from None
            if not math.isfinite(v):
                raise ParseError("objective must be finite", rownum)
            vals.append(v)
    return CandidatePool(
        fps,
        dimension,
        ids=ids if id_col is not None else None,
        oracle_values=np.array(vals) if obj_col is not None else None,
    )


def write_pool(pool: CandidatePool, dest, schema: PoolSchema | None = None) -> None:
    """Write ``pool`` in the sparse layout accepted by :func:`load_pool`."""
    schema = schema or PoolSchema()
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="") if own else dest
    try:
        writer = csv.writer(fh, delimiter=schema.delimiter, lineterminator="\n")
        header = [schema.id_col, schema.sparse_col]
        if pool.has_oracle:
            header.append(schema.objective_col)
        writer.writerow(header)
        for i, fp in enumerate(pool.candidates):
            ident = pool.ids[i] if pool.ids is not None else f"c{i}"
            row = [ident, " ".join(f"{a}:{c}" for a, c in fp.entries)]
            if pool.has_oracle:
                row.append(repr(float(pool.oracle_values[i])))
            writer.writerow(row)
    finally:
        if own:
            fh.close()


def pool_from_text(text: str, dimension: int, schema: PoolSchema | None = None) -> CandidatePool:
    return load_pool(io.StringIO(text), dimension, schema)
