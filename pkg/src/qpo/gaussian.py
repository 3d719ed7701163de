"""Multivariate Gaussian utilities: factorization, sampling, moment fitting.

Samples are drawn from counter-based Philox streams. The stream for a block
of ``SAMPLE_BLOCK`` consecutive samples is keyed by the base seed and its
counter starts at the block index, so the output does not depend on how
blocks are distributed over threads, and the first ``k`` rows of an
``M``-row draw equal a ``k``-row draw with the same seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import NumericError, UsageError

SAMPLE_BLOCK = 1024
JITTER_LADDER = tuple(10.0**k for k in range(-10, -3))  # 1e-10 .. 1e-4


def cholesky_with_jitter(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``cov``, adding diagonal jitter if needed.

    Jitter escalates by decades from 1e-10 to 1e-4 times the mean diagonal.
    Returns ``(L, jitter)`` with ``L @ L.T == cov + jitter * I``.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise UsageError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise UsageError("covariance has non-finite entries")
    n = cov.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    try:
        return np.linalg.cholesky(cov), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = np.trace(cov) / n
    if scale <= 0:
        scale = 1.0
    eye = np.eye(n)
    for rel in JITTER_LADDER:
        jitter = rel * scale
        try:
            return np.linalg.cholesky(cov + jitter * eye), float(jitter)
        except np.linalg.LinAlgError:
            continue
    worst = float(np.linalg.eigvalsh(0.5 * (cov + cov.T)).min())
    raise NumericError(
        f"matrix not positive definite at max jitter {JITTER_LADDER[-1] * scale:.3g}; "
        f"most negative eigenvalue {worst:.6g}"
    )


@dataclass
class GaussianPosterior:
    """Joint Gaussian over ``n`` candidates with a lazily cached factor."""

    mean: np.ndarray
    covariance: np.ndarray
    _chol: np.ndarray | None = field(default=None, repr=False)
    jitter_used: float = 0.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        n = self.mean.size
        if self.covariance.shape != (n, n):
            raise UsageError(f"covariance shape {self.covariance.shape} does not match mean length {n}")
        scale = max(np.abs(self.covariance).max(initial=0.0), 1e-300)
        if np.abs(self.covariance - self.covariance.T).max(initial=0.0) > 1e-10 * scale:
            raise UsageError("covariance is not symmetric")

    @property
    def n(self) -> int:
        return self.mean.size

    @property
    def chol(self) -> np.ndarray:
        if self._chol is None:
            self._chol, self.jitter_used = cholesky_with_jitter(self.covariance)
        return self._chol

    @property
    def variance(self) -> np.ndarray:
        return np.clip(np.diag(self.covariance), 0.0, None)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def subset(self, idx) -> "GaussianPosterior":
        idx = np.asarray(idx, dtype=np.int64)
        return GaussianPosterior(self.mean[idx], self.covariance[np.ix_(idx, idx)])


@dataclass
class SampleMatrix:
    """``M x n`` joint draws; row ``m`` is one posterior sample."""

    values: np.ndarray
    seed_lineage: dict

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise UsageError("sample matrix must be 2-D with at least one row")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("sample matrix contains non-finite values")

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def head(self, k: int) -> "SampleMatrix":
        return SampleMatrix(self.values[:k], dict(self.seed_lineage, rows=k))


def _philox(seed: int, block: int) -> np.random.Generator:
    seed = int(seed) % (1 << 128)
    key = [seed & 0xFFFFFFFFFFFFFFFF, seed >> 64]
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, block, 0]))


def standard_normal_block(seed: int, M: int, n: int, threads: int = 1) -> np.ndarray:
    """``M x n`` standard normals assembled from per-block counter streams."""
    nblocks = -(-M // SAMPLE_BLOCK)

    def block(b):
        rows = min(SAMPLE_BLOCK, M - b * SAMPLE_BLOCK)
        return _philox(seed, b).standard_normal((rows, n))

    if threads > 1 and nblocks > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(block, range(nblocks)))
    else:
        parts = [block(b) for b in range(nblocks)]
    return np.concatenate(parts, axis=0) if parts else np.empty((0, n))


def sample_joint(post: GaussianPosterior, M: int, seed: int, threads: int = 1) -> SampleMatrix:
    """Draw ``M`` joint samples ``mean + L @ eps``."""
    if M < 1:
        raise UsageError(f"M must be >= 1, got {M}")
    L = post.chol
    eps = standard_normal_block(seed, M, post.n, threads)
    values = eps @ L.T
    values += post.mean
    lineage = {
        "generator": "philox4x64",
        "seed": int(seed),
        "block_size": SAMPLE_BLOCK,
        "rows": int(M),
        "jitter": post.jitter_used,
    }
    return SampleMatrix(values, lineage)


def fit_gaussian(samples: SampleMatrix | np.ndarray) -> GaussianPosterior:
    """Empirical mean and unbiased covariance of the sample rows."""
    Y = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise UsageError("fit_gaussian needs at least two samples")
    mu = Y.mean(axis=0)
    D = Y - mu
    cov = D.T @ D / (Y.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    return GaussianPosterior(mu, cov)


# ---------------------------------------------------------------------------
# Analytic maximum probabilities for n in {2, 3}
# ---------------------------------------------------------------------------


def _ncdf(x):
    return special.ndtr(x)


def _step(m: float) -> float:
    return 1.0 if m > 0 else (0.5 if m == 0 else 0.0)


def bivariate_normal_cdf(h: float, k: float, rho: float) -> float:
    """P(U <= h, V <= k) for standard normals with correlation ``rho``.

    Uses adaptive quadrature over the correlation parameter,

        Phi2 = Phi(h) Phi(k) + 1/(2 pi) int_0^rho exp(-(h^2 - 2rhk + k^2) / (2(1-r^2))) / sqrt(1-r^2) dr,

    switching to the conditional form int_{-inf}^h phi(x) Phi((k - rho x)/sqrt(1-rho^2)) dx
    when ``|rho|`` is close to one.
    """
    rho = float(np.clip(rho, -1.0, 1.0))
    if rho == 1.0:
        return float(_ncdf(min(h, k)))
    if rho == -1.0:
        return float(max(0.0, _ncdf(h) + _ncdf(k) - 1.0))
    if abs(rho) < 0.9:
        def f(r):
            q = 1.0 - r * r
            return math.exp(-(h * h - 2.0 * r * h * k + k * k) / (2.0 * q)) / math.sqrt(q)

        val, _ = integrate.quad(f, 0.0, rho, epsabs=1e-12, epsrel=1e-12, limit=200)
        out = _ncdf(h) * _ncdf(k) + val / (2.0 * math.pi)
    else:
        s = math.sqrt(1.0 - rho * rho)

        def g(x):
            return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi) * _ncdf((k - rho * x) / s)

        lo = min(h, k / rho if rho else h) - 40.0
        pts = [k / rho] if lo < k / rho < h else None
        val, _ = integrate.quad(g, lo, h, epsabs=1e-12, epsrel=1e-12, limit=400, points=pts)
        out = val
    return float(np.clip(out, 0.0, 1.0))


def prob_max_analytic(post: GaussianPosterior, i: int) -> float:
    """Probability that candidate ``i`` exceeds every other candidate.

    Only ``n`` in {2, 3} is supported. The differences ``y_i - y_j`` form a
    Gaussian vector; the result is its positive-orthant probability.
    """
    n = post.n
    if n not in (2, 3):
        raise UsageError(f"analytic optimality probability supports n in {{2, 3}}, got n={n}")
    if not 0 <= i < n:
        raise UsageError(f"index {i} out of range for n={n}")
    others = [j for j in range(n) if j != i]
    A = np.zeros((n - 1, n))
    A[:, i] = 1.0
    for r, j in enumerate(others):
        A[r, j] = -1.0
    m = A @ post.mean
    S = A @ post.covariance @ A.T
    var = np.clip(np.diag(S), 0.0, None)
    tol = 1e-14 * max(1.0, float(np.abs(post.covariance).max(initial=0.0)))
    degenerate = var <= tol
    if n == 2:
        if degenerate[0]:
            return _step(m[0])
        return float(_ncdf(m[0] / math.sqrt(var[0])))
    if degenerate.all():
        return _step(m[0]) * _step(m[1])
    if degenerate[0]:
        return _step(m[0]) * float(_ncdf(m[1] / math.sqrt(var[1])))
    if degenerate[1]:
        return _step(m[1]) * float(_ncdf(m[0] / math.sqrt(var[0])))
    s = np.sqrt(var)
    rho = S[0, 1] / (s[0] * s[1])
    return bivariate_normal_cdf(m[0] / s[0], m[1] / s[1], rho)
