"""Batch selection policies over a discrete candidate set.

Every function here works in "maximize" units and in positions relative to
the scored candidate list; the campaign driver maps positions back to pool
indices and handles sign conventions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import UsageError
from .gaussian import GaussianPosterior, SampleMatrix, sample_joint

POLICIES = (
    "qpo",
    "qpo-conditional",
    "greedy",
    "ucb",
    "bucb",
    "pts",
    "qei",
    "qpi",
    "tsrsr",
    "random10k",
)
SAMPLING_POLICIES = frozenset({"qpo", "qpo-conditional", "bucb", "pts", "qei", "qpi", "tsrsr"})
PREFILTERED_POLICIES = SAMPLING_POLICIES | {"random10k"}
PREFILTER_METRICS = ("greedy", "ucb")

_COLUMN_CHUNK = 256


@dataclass
class PolicyConfig:
    policy: str = "qpo"
    M: int = 10_000
    beta_ucb: float = 1.0
    beta_bucb: float = math.sqrt(3.0)
    prefilter_size: int = 10_000
    prefilter_metric: str = "greedy"
    seed: int = 0

    def validate(self, b: int | None = None) -> None:
        if self.policy not in POLICIES:
            raise UsageError(f"unknown policy {self.policy!r}; valid: {', '.join(POLICIES)}")
        if self.prefilter_metric not in PREFILTER_METRICS:
            raise UsageError(
                f"unknown prefilter metric {self.prefilter_metric!r}; valid: {', '.join(PREFILTER_METRICS)}"
            )
        if self.M < 1:
            raise UsageError("M must be >= 1")
        if b is not None and self.prefilter_size < b:
            raise UsageError(f"prefilter_size ({self.prefilter_size}) must be >= batch size ({b})")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AcquisitionResult:
    """Selected batch (positions into the scored subset) plus per-candidate scores."""

    scores: np.ndarray | None
    batch: np.ndarray
    policy: str
    diagnostics: dict = field(default_factory=dict)


def rank_order(primary, secondary=None) -> np.ndarray:
    """Positions sorted by ``primary`` desc, then ``secondary`` desc, then position asc."""
    primary = np.asarray(primary, dtype=np.float64)
    pos = np.arange(primary.size)
    if secondary is None:
        return np.lexsort((pos, -primary))
    return np.lexsort((pos, -np.asarray(secondary, dtype=np.float64), -primary))


def _check_b(b: int, n: int) -> None:
    if b < 0 or b > n:
        raise UsageError(f"batch size {b} invalid for {n} candidates")


def prefilter(post_means, post_stds, cfg: PolicyConfig) -> np.ndarray:
    """Top ``prefilter_size`` positions by mean (greedy) or mean + beta * std (ucb)."""
    mu = np.asarray(post_means, dtype=np.float64)
    sd = np.asarray(post_stds, dtype=np.float64)
    if mu.shape != sd.shape:
        raise UsageError("means and stds differ in length")
    if cfg.prefilter_metric == "ucb":
        score = mu + cfg.beta_ucb * sd
    elif cfg.prefilter_metric == "greedy":
        score = mu
    else:
        raise UsageError(f"unknown prefilter metric {cfg.prefilter_metric!r}")
    return rank_order(score)[: cfg.prefilter_size]


# ---------------------------------------------------------------------------
# qPO
# ---------------------------------------------------------------------------


def qpo_scores(samples: SampleMatrix | np.ndarray) -> np.ndarray:
    """Fraction of samples in which each candidate is the row maximum.

    Exact ties go to the lowest index (``argmax`` semantics).
    """
    Y = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise UsageError("need at least one sample row")
    winners = Y.argmax(axis=1)
    return np.bincount(winners, minlength=Y.shape[1]) / Y.shape[0]


def qpo_select(scores, means, b: int) -> np.ndarray:
    """Top-``b`` by score, ties and zero-score fill broken by predicted mean."""
    scores = np.asarray(scores, dtype=np.float64)
    _check_b(b, scores.size)
    return rank_order(scores, means)[:b]


def qpo_conditional_batch(samples: SampleMatrix | np.ndarray, b: int, means) -> np.ndarray:
    """Build the batch one slot at a time, conditioning on earlier picks not being optimal.

    Conditioning is done by discarding every sample whose maximizer is
    already in the batch. Once no samples survive the rest of the batch is
    filled by predicted mean.
    """
    Y = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples)
    n = Y.shape[1]
    _check_b(b, n)
    means = np.asarray(means, dtype=np.float64)
    winners = Y.argmax(axis=1)
    alive = np.ones(winners.size, dtype=bool)
    chosen = np.zeros(n, dtype=bool)
    batch = []
    for _ in range(b):
        if alive.any():
            counts = np.bincount(winners[alive], minlength=n).astype(np.float64)
            counts[chosen] = -1.0
            pick = int(rank_order(counts, means)[0])
        else:
            rest = np.where(chosen, -np.inf, means)
            pick = int(rank_order(rest)[0])
        batch.append(pick)
        chosen[pick] = True
        alive &= winners != pick
    return np.array(batch, dtype=np.int64)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def greedy_select(means, b: int) -> np.ndarray:
    means = np.asarray(means, dtype=np.float64)
    _check_b(b, means.size)
    return rank_order(means)[:b]


def ucb_select(means, stds, beta: float, b: int) -> np.ndarray:
    score = np.asarray(means, dtype=np.float64) + beta * np.asarray(stds, dtype=np.float64)
    _check_b(b, score.size)
    return rank_order(score)[:b]


def pts_select(samples: SampleMatrix | np.ndarray, b: int) -> np.ndarray:
    """Parallel Thompson sampling: slot ``m`` takes the best unselected candidate of row ``m``."""
    Y = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples)
    _check_b(b, Y.shape[1])
    if Y.shape[0] < b:
        raise UsageError(f"pTS needs at least b={b} samples, got {Y.shape[0]}")
    chosen = np.zeros(Y.shape[1], dtype=bool)
    batch = []
    for m in range(b):
        row = np.where(chosen, -np.inf, Y[m])
        pick = int(row.argmax())
        batch.append(pick)
        chosen[pick] = True
    return np.array(batch, dtype=np.int64)


def tsrsr_select(post: GaussianPosterior, samples: SampleMatrix | np.ndarray, b: int) -> np.ndarray:
    """Per-sample minimizer of (sample max - mean) / std over unselected candidates."""
    Y = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples)
    _check_b(b, Y.shape[1])
    if Y.shape[0] < b:
        raise UsageError(f"TS-RSR needs at least b={b} samples, got {Y.shape[0]}")
    mu = post.mean
    sd = np.maximum(post.std, 1e-9)
    chosen = np.zeros(Y.shape[1], dtype=bool)
    batch = []
    for m in range(b):
        ratio = (Y[m].max() - mu) / sd
        ratio[chosen] = np.inf
        pick = int(ratio.argmin())
        batch.append(pick)
        chosen[pick] = True
    return np.array(batch, dtype=np.int64)


def random10k_select(prefiltered, b: int, seed: int) -> np.ndarray:
    pool = np.asarray(prefiltered, dtype=np.int64)
    _check_b(b, pool.size)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) % (1 << 63), 0x72616E64]))
    return rng.choice(pool, size=b, replace=False)


def _utility(kind: str, best: np.ndarray, incumbent: float) -> np.ndarray:
    if kind == "qei":
        return np.maximum(best - incumbent, 0.0)
    if kind == "qpi":
        return (best > incumbent).astype(np.float64)
    return best


def mc_batch_policy(
    post: GaussianPosterior,
    b: int,
    kind: str,
    incumbent: float,
    cfg: PolicyConfig,
    samples: SampleMatrix | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sequential greedy construction of a qEI / qPI / qUCB batch.

    Each slot adds the candidate maximizing the Monte Carlo estimate of the
    batch utility of (already selected + candidate) over shared joint
    samples. Returns ``(batch, first_slot_scores)``. Score ties go to the
    higher predicted mean, then the lower position.

    For ``"bucb"`` each sample is reparameterized as
    ``mu + sqrt(beta * pi / 2) * |y - mu|`` with ``beta = beta_bucb ** 2``.
    """
    kind = kind.lower()
    if kind not in ("qei", "qpi", "bucb"):
        raise UsageError(f"unknown MC batch policy {kind!r}")
    _check_b(b, post.n)
    if samples is None:
        samples = sample_joint(post, cfg.M, cfg.seed)
    Y = samples.values
    if kind == "bucb":
        beta = cfg.beta_bucb**2
        Y = post.mean + math.sqrt(beta * math.pi / 2.0) * np.abs(Y - post.mean)
    M, n = Y.shape
    best = np.full(M, -np.inf)
    chosen = np.zeros(n, dtype=bool)
    batch, first = [], None
    for _ in range(b):
        score = np.empty(n)
        for start in range(0, n, _COLUMN_CHUNK):
            blk = Y[:, start : start + _COLUMN_CHUNK]
            score[start : start + blk.shape[1]] = _utility(
                kind, np.maximum(best[:, None], blk), incumbent
            ).mean(axis=0)
        if first is None:
            first = score.copy()
        score[chosen] = -np.inf
        pick = int(rank_order(score, post.mean)[0])
        batch.append(pick)
        chosen[pick] = True
        best = np.maximum(best, Y[:, pick])
    return np.array(batch, dtype=np.int64), first


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def samples_needed(cfg: PolicyConfig, b: int) -> int:
    """Rows of the shared sample matrix a policy reads.

    Sample rows are prefix-stable, so slicing policies draw only ``b`` rows
    and still see the same rows as a full ``M``-row draw.
    """
    if cfg.policy in ("pts", "tsrsr"):
        if cfg.M < b:
            raise UsageError(f"{cfg.policy} needs M >= b ({cfg.M} < {b})")
        return b
    return cfg.M


def select(
    cfg: PolicyConfig,
    post: GaussianPosterior,
    b: int,
    incumbent: float = -math.inf,
    seed: int | None = None,
    threads: int = 1,
) -> AcquisitionResult:
    """Run a posterior-based policy on ``post`` and return a batch of positions."""
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    _check_b(b, post.n)
    mu = post.mean
    policy = cfg.policy
    diag: dict = {}
    if policy == "greedy":
        return AcquisitionResult(mu.copy(), greedy_select(mu, b), policy, diag)
    if policy == "ucb":
        score = mu + cfg.beta_ucb * post.std
        return AcquisitionResult(score, ucb_select(mu, post.std, cfg.beta_ucb, b), policy, diag)
    if policy == "random10k":
        return AcquisitionResult(None, random10k_select(np.arange(post.n), b, seed), policy, diag)

    samples = sample_joint(post, samples_needed(cfg, b), seed, threads=threads)
    diag["samples"] = samples.M
    diag["jitter"] = post.jitter_used
    if policy in ("qpo", "qpo-conditional"):
        scores = qpo_scores(samples)
        nonzero = int(np.count_nonzero(scores))
        diag["nonzero_scores"] = nonzero
        diag["zero_scores"] = int(scores.size - nonzero)
        diag["fill_rule"] = nonzero < b
        if policy == "qpo":
            batch = qpo_select(scores, mu, b)
        else:
            batch = qpo_conditional_batch(samples, b, mu)
        return AcquisitionResult(scores, batch, policy, diag)
    if policy == "pts":
        return AcquisitionResult(None, pts_select(samples, b), policy, diag)
    if policy == "tsrsr":
        return AcquisitionResult(None, tsrsr_select(post, samples, b), policy, diag)
    batch, first = mc_batch_policy(post, b, policy, incumbent, cfg, samples)
    diag["incumbent"] = incumbent
    return AcquisitionResult(first, batch, policy, diag)
