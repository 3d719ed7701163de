"""Campaign evaluation metrics.

Cumulative regret is the sum over iterations ``t = 0..T`` (``t = 0`` being
the random seed batch) of the simple regret of the best value acquired so
far, measured in the direction of the objective so it is never negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UsageError
from .fingerprints import CandidatePool, pairwise_tanimoto

DIRECTIONS = ("max", "min")


def _sign(direction: str) -> int:
    if direction not in DIRECTIONS:
        raise UsageError(f"direction must be 'max' or 'min', got {direction!r}")
    return 1 if direction == "max" else -1


@dataclass
class MetricSnapshot:
    top_k_avg: dict = field(default_factory=dict)
    fraction_top: dict = field(default_factory=dict)
    simple_regret: float = 0.0
    cumulative_regret: float = 0.0

    def to_dict(self) -> dict:
        return {
            "top_k_avg": {str(k): v for k, v in self.top_k_avg.items()},
            "fraction_top": {str(p): v for p, v in self.fraction_top.items()},
            "simple_regret": self.simple_regret,
            "cumulative_regret": self.cumulative_regret,
        }


def top_k_average(values, k: int, direction: str = "max") -> float:
    """Mean of the ``k`` best acquired values."""
    s = _sign(direction)
    v = np.asarray(values, dtype=np.float64)
    if k < 1 or v.size < k:
        raise UsageError(f"top-{k} average needs at least {k} acquired values, got {v.size}")
    best = np.sort(s * v)[::-1][:k]
    return float(s * best.mean())


def top_count(N: int, p: float) -> int:
    """Size of the true top-``p`` fraction, ``ceil(p * N)``."""
    if not 0 < p <= 1:
        raise UsageError(f"fraction must be in (0, 1], got {p}")
    return min(N, max(1, math.ceil(p * N - 1e-9))) if N else 0


def true_top(oracle_values, p: float, direction: str = "max") -> np.ndarray:
    """Indices of the true top ``ceil(p * N)`` candidates, ties by index."""
    s = _sign(direction)
    v = np.asarray(oracle_values, dtype=np.float64)
    order = np.lexsort((np.arange(v.size), -s * v))
    return order[: top_count(v.size, p)]


def fraction_top(acquired, pool: CandidatePool | np.ndarray, p: float, direction: str = "max") -> float:
    values = pool.oracle_values if isinstance(pool, CandidatePool) else np.asarray(pool)
    if values is None:
        raise DataError("fraction_top needs complete oracle values")
    top = true_top(values, p, direction)
    if top.size == 0:
        return 0.0
    hit = np.intersect1d(np.asarray(acquired, dtype=np.int64), top).size
    return hit / top.size


def regret_curve(values, iterations, optimum: float, direction: str = "max") -> np.ndarray:
    """Best-so-far simple regret after each iteration ``0..max(iterations)``."""
    s = _sign(direction)
    v = s * np.asarray(values, dtype=np.float64)
    it = np.asarray(iterations, dtype=np.int64)
    if v.size == 0:
        raise UsageError("regret needs at least one acquired value")
    T = int(it.max())
    per_iter = np.full(T + 1, -np.inf)
    np.maximum.at(per_iter, it, v)
    best = np.maximum.accumulate(per_iter)
    return np.maximum(s * optimum - best, 0.0)


def cumulative_regret(state, pool: CandidatePool) -> float:
    """Summed best-so-far regret of a finished campaign."""
    if not pool.has_oracle:
        raise DataError("cumulative regret needs pool oracle values")
    direction = state.config.objective_direction
    s = _sign(direction)
    optimum = float(s * np.max(s * pool.oracle_values))
    idx, vals, its = zip(*state.acquired)
    return float(regret_curve(vals, its, optimum, direction).sum())


@dataclass
class DiversityStats:
    counts: np.ndarray
    bin_edges: np.ndarray
    edges: list  # (i, j, similarity) with pool indices
    similarities: np.ndarray


def diversity_stats(
    pool: CandidatePool,
    batch,
    threshold: float = 0.4,
    bins: int = 20,
    similarity: str = "minmax",
) -> DiversityStats:
    """Histogram of all pairwise similarities in ``batch`` and the edges above ``threshold``."""
    idx = pool.check_indices(batch)
    if idx.size < 2:
        raise UsageError("diversity statistics need a batch of at least two")
    S = pairwise_tanimoto(pool, idx, similarity)
    iu, ju = np.triu_indices(idx.size, k=1)
    sims = S[iu, ju]
    counts, edges = np.histogram(sims, bins=bins, range=(0.0, 1.0))
    links = [
        (int(idx[a]), int(idx[b]), float(s)) for a, b, s in zip(iu, ju, sims) if s > threshold
    ]
    return DiversityStats(counts, edges, links, sims)


def mean_sem(values) -> tuple[float, float]:
    """Mean and standard error of the mean (sample std / sqrt(n))."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def snapshot(
    acquired_idx,
    acquired_vals,
    acquired_iters,
    pool: CandidatePool,
    direction: str,
    ks=(10, 100),
    ps=(0.005, 0.01),
) -> MetricSnapshot:
    """Metrics for the data acquired so far."""
    snap = MetricSnapshot()
    vals = np.asarray(acquired_vals, dtype=np.float64)
    for k in ks:
        if vals.size >= k:
            snap.top_k_avg[k] = top_k_average(vals, k, direction)
    if pool.has_oracle:
        for p in ps:
            snap.fraction_top[p] = fraction_top(acquired_idx, pool, p, direction)
        s = _sign(direction)
        optimum = float(s * np.max(s * pool.oracle_values))
        curve = regret_curve(vals, acquired_iters, optimum, direction)
        snap.simple_regret = float(curve[-1])
        snap.cumulative_regret = float(curve.sum())
    return snap
