"""Tanimoto-kernel Gaussian process with a constant mean.

The kernel is ``output_scale * tanimoto(a, b)``, the likelihood adds
``noise`` to the training diagonal. Predictions are latent (noise-free)
unless ``predictive_noise`` is set.

Hyperparameter fitting maximizes the exact marginal log likelihood. Given
``(output_scale, noise)`` the best constant mean has a closed form, so the
search runs a bounded Nelder-Mead simplex over the two log-scale parameters
only, using an eigendecomposition of the training Gram matrix so each
objective evaluation is O(n).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
from scipy import linalg, optimize

from .errors import NumericError, UsageError
from .fingerprints import CandidatePool, CountFingerprint, tanimoto_matrix
from .gaussian import GaussianPosterior, cholesky_with_jitter

logger = logging.getLogger(__name__)

NOISE_FLOOR = 1e-6
LOG_BOUNDS = (math.log(1e-4), math.log(1e2))
_LOG_2PI = math.log(2.0 * math.pi)
_CHUNK = 4096


@dataclass(frozen=True)
class GpHyperparams:
    mean_const: float
    output_scale: float
    noise: float

    def __post_init__(self):
        if not self.output_scale > 0:
            raise UsageError(f"output_scale must be positive, got {self.output_scale}")
        if not self.noise >= NOISE_FLOOR:
            raise UsageError(f"noise must be >= {NOISE_FLOOR}, got {self.noise}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GpConfig:
    """Surrogate settings shared by every fit in a campaign."""

    similarity: str = "minmax"
    restarts: int = 8
    predictive_noise: bool = False


@dataclass
class TrainingSet:
    """Acquired data. ``targets`` are raw oracle values; ``y`` is sign-adjusted.

    ``indices`` are optional pool indices used to reject overlap with the
    prediction subset. ``point_noise`` adds per-observation variance on top
    of the shared likelihood noise.
    """

    inputs: list[CountFingerprint]
    targets: np.ndarray
    sign: int = 1
    indices: np.ndarray | None = None
    point_noise: np.ndarray | None = None
    _dense: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if len(self.inputs) != self.targets.size:
            raise UsageError("inputs and targets differ in length")
        if self.sign not in (1, -1):
            raise UsageError("sign must be +1 or -1")
        if self.indices is not None:
            self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
            if self.indices.size != self.targets.size:
                raise UsageError("indices and targets differ in length")
            if np.unique(self.indices).size != self.indices.size:
                raise UsageError("duplicate pool indices in training set")
        if self.point_noise is not None:
            self.point_noise = np.asarray(self.point_noise, dtype=np.float64).reshape(-1)
            if self.point_noise.size != self.targets.size or np.any(self.point_noise < 0):
                raise UsageError("point_noise must be nonnegative, one entry per target")

    @classmethod
    def from_pool(cls, pool: CandidatePool, indices, targets, sign: int = 1) -> "TrainingSet":
        idx = pool.check_indices(indices)
        ts = cls([pool.candidates[i] for i in idx], targets, sign, idx)
        ts._dense = pool.dense(idx)
        return ts

    def __len__(self):
        return self.targets.size

    def diag_noise(self, noise: float) -> np.ndarray:
        extra = 0.0 if self.point_noise is None else self.point_noise
        return noise + extra * np.ones(len(self))

    @property
    def y(self) -> np.ndarray:
        return self.sign * self.targets

    @property
    def dense(self) -> np.ndarray:
        if self._dense is None:
            dim = self.inputs[0].dimension if self.inputs else 1
            X = np.zeros((len(self.inputs), dim))
            for r, fp in enumerate(self.inputs):
                X[r, fp.indices] = fp.counts
            self._dense = X
        return self._dense


def _gram(train: TrainingSet, similarity: str) -> np.ndarray:
    X = train.dense
    T = tanimoto_matrix(X, X, similarity)
    return 0.5 * (T + T.T)


def _mll_from_gram(T: np.ndarray, y: np.ndarray, hp: GpHyperparams, diag=None) -> float:
    diag = hp.noise if diag is None else diag
    K = hp.output_scale * T + np.diag(np.broadcast_to(diag, y.shape))
    L, _ = cholesky_with_jitter(K)
    alpha = linalg.solve_triangular(L, y - hp.mean_const, lower=True)
    n = y.size
    return float(-0.5 * alpha @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * _LOG_2PI)


def mll(train: TrainingSet, hp: GpHyperparams, similarity: str = "minmax") -> float:
    """Exact marginal log likelihood of the sign-adjusted targets."""
    if len(train) == 0:
        raise UsageError("marginal likelihood needs a nonempty training set")
    return _mll_from_gram(_gram(train, similarity), train.y, hp, train.diag_noise(hp.noise))


class _SpectralObjective:
    """MLL over (log scale, log noise) with the constant mean profiled out."""

    def __init__(self, T: np.ndarray, y: np.ndarray, mean_bounds: tuple[float, float]):
        lam, Q = np.linalg.eigh(T)
        self.lam = np.clip(lam, 0.0, None)
        self.r = Q.T @ y
        self.u = Q.T @ np.ones_like(y)
        self.n = y.size
        self.mean_bounds = mean_bounds

    def best_mean(self, s: float, v: float) -> float:
        d = s * self.lam + v
        c = (self.u @ (self.r / d)) / (self.u @ (self.u / d))
        return float(np.clip(c, *self.mean_bounds))

    def value(self, s: float, v: float, c: float) -> float:
        d = s * self.lam + v
        e = self.r - c * self.u
        return float(-0.5 * (e * e / d).sum() - 0.5 * np.log(d).sum() - 0.5 * self.n * _LOG_2PI)

    def __call__(self, theta) -> float:
        s, v = math.exp(theta[0]), math.exp(theta[1])
        val = self.value(s, v, self.best_mean(s, v))
        return -val if math.isfinite(val) else 1e300


class _CholeskyObjective:
    """Same objective as the spectral one, for training sets with per-point noise."""

    def __init__(self, T, y, extra, mean_bounds):
        self.T, self.y, self.extra, self.mean_bounds = T, y, extra, mean_bounds
        self.ones = np.ones_like(y)

    def best_mean(self, s, v):
        K = s * self.T + np.diag(v + self.extra)
        L, _ = cholesky_with_jitter(K)
        a = linalg.cho_solve((L, True), self.y)
        b = linalg.cho_solve((L, True), self.ones)
        return float(np.clip((self.ones @ a) / (self.ones @ b), *self.mean_bounds))

    def value(self, s, v, c):
        hp = GpHyperparams(c, s, max(v, NOISE_FLOOR))
        return _mll_from_gram(self.T, self.y, hp, v + self.extra)

    def __call__(self, theta):
        s, v = math.exp(theta[0]), math.exp(theta[1])
        try:
            val = self.value(s, v, self.best_mean(s, v))
        except NumericError:
            return 1e300
        return -val if math.isfinite(val) else 1e300


def fit(
    train: TrainingSet,
    restarts: int = 8,
    seed: int = 0,
    similarity: str = "minmax",
) -> GpHyperparams:
    """Maximize the marginal log likelihood from seeded multi-start simplices.

    Search box: mean within the target range widened by one range-width on
    each side; output scale and noise log-uniform in [1e-4, 1e2].
    """
    if len(train) < 2:
        raise UsageError("fitting needs at least two training points")
    if restarts < 1:
        raise UsageError("restarts must be >= 1")
    y = train.y
    lo, hi = float(y.min()), float(y.max())
    width = hi - lo
    T = _gram(train, similarity)
    bounds_c = (lo - width, hi + width)
    if train.point_noise is None:
        obj = _SpectralObjective(T, y, bounds_c)
    else:
        obj = _CholeskyObjective(T, y, train.point_noise, bounds_c)

    rng = np.random.default_rng(np.random.SeedSequence([int(seed) % (1 << 63), 0x6770]))
    starts = rng.uniform(*LOG_BOUNDS, size=(restarts, 2))
    bounds = [LOG_BOUNDS, LOG_BOUNDS]
    opts = {"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000}
    best_theta, best_val = None, math.inf
    for x0 in starts:
        res = optimize.minimize(obj, x0, method="Nelder-Mead", bounds=bounds, options=opts)
        # restart once from the optimum to escape a collapsed simplex
        res = optimize.minimize(obj, res.x, method="Nelder-Mead", bounds=bounds, options=opts)
        if math.isfinite(res.fun) and res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    if best_theta is None or best_val >= 1e300:
        raise NumericError("all marginal-likelihood restarts failed", partial=best_theta)
    s, v = math.exp(best_theta[0]), math.exp(best_theta[1])
    return GpHyperparams(obj.best_mean(s, v), s, max(v, NOISE_FLOOR))


class FittedGP:
    """Conditioned Tanimoto GP ready for prediction on pool candidates."""

    def __init__(self, train: TrainingSet, hp: GpHyperparams, config: GpConfig | None = None):
        self.train = train
        self.hp = hp
        self.config = config or GpConfig()
        n = len(train)
        if n:
            T = _gram(train, self.config.similarity)
            K = hp.output_scale * T + np.diag(train.diag_noise(hp.noise))
            self._L, self.jitter = cholesky_with_jitter(K)
            self._w = linalg.solve_triangular(self._L, train.y - hp.mean_const, lower=True)
        else:
            self._L, self.jitter, self._w = None, 0.0, None

    def _check_subset(self, pool: CandidatePool, subset) -> np.ndarray:
        idx = pool.check_indices(subset)
        if idx.size == 0:
            raise UsageError("prediction subset is empty")
        if self.train.indices is not None and np.intersect1d(idx, self.train.indices).size:
            raise UsageError("prediction subset overlaps the training set")
        return idx

    def _project(self, X: np.ndarray) -> np.ndarray:
        Ks = self.hp.output_scale * tanimoto_matrix(self.train.dense, X, self.config.similarity)
        return linalg.solve_triangular(self._L, Ks, lower=True)

    def marginals(self, pool: CandidatePool, subset) -> tuple[np.ndarray, np.ndarray]:
        """Predictive means and standard deviations, computed in chunks."""
        idx = self._check_subset(pool, subset)
        mu = np.empty(idx.size)
        var = np.empty(idx.size)
        s, c = self.hp.output_scale, self.hp.mean_const
        for start in range(0, idx.size, _CHUNK):
            sl = slice(start, start + _CHUNK)
            if self._L is None:
                mu[sl], var[sl] = c, s
                continue
            A = self._project(pool.dense(idx[sl]))
            mu[sl] = c + A.T @ self._w
            var[sl] = s - (A * A).sum(axis=0)
        var = np.clip(var, 0.0, None)
        if self.config.predictive_noise:
            var = var + self.hp.noise
        return mu, np.sqrt(var)

    def joint(self, pool: CandidatePool, subset) -> GaussianPosterior:
        idx = self._check_subset(pool, subset)
        X = pool.dense(idx)
        s, c = self.hp.output_scale, self.hp.mean_const
        Kss = s * tanimoto_matrix(X, X, self.config.similarity)
        if self._L is None:
            mu, cov = np.full(idx.size, c), Kss
        else:
            A = self._project(X)
            mu = c + A.T @ self._w
            cov = Kss - A.T @ A
        cov = 0.5 * (cov + cov.T)
        if self.config.predictive_noise:
            cov = cov + self.hp.noise * np.eye(idx.size)
        return GaussianPosterior(mu, cov)


def posterior(
    train: TrainingSet,
    hp: GpHyperparams,
    pool: CandidatePool,
    subset: Sequence[int],
    config: GpConfig | None = None,
) -> GaussianPosterior:
    """Joint predictive Gaussian over ``subset`` of the pool."""
    return FittedGP(train, hp, config).joint(pool, subset)
