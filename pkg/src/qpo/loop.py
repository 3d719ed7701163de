"""Batched Bayesian-optimization campaign driver.

One iteration: fit the GP on everything acquired so far, predict marginals
over the unacquired candidates, prefilter (for sampling-based policies and
random10k), select a batch, query the oracle, append. All randomness is
derived from the campaign seed through ``numpy.random.SeedSequence`` so a
campaign is a pure function of ``(pool, config)``.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import acquisition as acq
from .errors import DataError, NumericError, UsageError
from .fingerprints import CandidatePool, CountFingerprint, tanimoto_matrix
from .gaussian import cholesky_with_jitter
from .metrics import MetricSnapshot, snapshot
from .surrogate import FittedGP, GpConfig, GpHyperparams, TrainingSet, fit

logger = logging.getLogger(__name__)

Oracle = Callable[[np.ndarray], np.ndarray]

# SeedSequence stage tags
_SEED_INIT, _SEED_FIT, _SEED_ACQ = 0, 1, 2


def derive_seed(*words: int) -> int:
    ss = np.random.SeedSequence([int(w) % (1 << 63) for w in words])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


@dataclass
class CampaignConfig:
    seed: int = 0
    init_batch: int = 50
    batch_size: int = 50
    iterations: int = 10
    policy: acq.PolicyConfig = field(default_factory=acq.PolicyConfig)
    objective_direction: str = "max"
    gp: GpConfig = field(default_factory=GpConfig)
    top_k: tuple = (10, 100)
    top_fractions: tuple = (0.005, 0.01)
    threads: int = 1

    @property
    def sign(self) -> int:
        return 1 if self.objective_direction == "max" else -1

    def validate(self, N: int | None = None) -> None:
        if self.objective_direction not in ("max", "min"):
            raise UsageError("objective_direction must be 'max' or 'min'")
        for name in ("init_batch", "batch_size"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")
        if self.iterations < 0:
            raise UsageError("iterations must be >= 0")
        if self.iterations > 0 and self.init_batch < 2:
            raise UsageError("init_batch must be >= 2 to fit the surrogate")
        self.policy.validate(self.batch_size)
        if N is not None and self.init_batch + self.iterations * self.batch_size > N:
            raise UsageError(
                f"init_batch + iterations * batch_size = "
                f"{self.init_batch + self.iterations * self.batch_size} exceeds pool size {N}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["top_k"] = list(self.top_k)
        d["top_fractions"] = list(self.top_fractions)
        d.pop("threads")
        return d


@dataclass
class IterationRecord:
    iteration: int
    policy: str
    selected: list
    values: list
    hyperparams: dict | None
    diagnostics: dict
    metrics: MetricSnapshot
    rng: dict
    ids: list | None = None
    timing: dict = field(default_factory=dict)

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "iteration": self.iteration,
            "policy": self.policy,
            "selected": self.selected,
            "ids": self.ids,
            "values": self.values,
            "hyperparams": self.hyperparams,
            "diagnostics": self.diagnostics,
            "metrics": self.metrics.to_dict(),
            "rng": self.rng,
        }
        if timing:
            d["timing"] = self.timing
        return d


@dataclass
class CampaignState:
    config: CampaignConfig
    acquired: list = field(default_factory=list)  # (index, value, iteration)
    records: list = field(default_factory=list)
    rng_lineage: dict = field(default_factory=dict)
    seed_metrics: MetricSnapshot | None = None
    error: str | None = None

    @property
    def acquired_indices(self) -> np.ndarray:
        return np.array([a[0] for a in self.acquired], dtype=np.int64)

    @property
    def acquired_values(self) -> np.ndarray:
        return np.array([a[1] for a in self.acquired], dtype=np.float64)

    @property
    def acquired_iterations(self) -> np.ndarray:
        return np.array([a[2] for a in self.acquired], dtype=np.int64)

    def log_lines(self) -> list[str]:
        """Deterministic line-delimited log; timing is excluded."""
        head = {
            "kind": "campaign",
            "config": self.config.to_dict(),
            "rng": self.rng_lineage,
            "seed_batch": [int(i) for i, _, t in self.acquired if t == 0],
            "seed_values": [float(v) for _, v, t in self.acquired if t == 0],
            "metrics": self.seed_metrics.to_dict() if self.seed_metrics else None,
        }
        lines = [json.dumps(head, sort_keys=True)]
        for rec in self.records:
            lines.append(json.dumps(dict(rec.to_dict(), kind="iteration"), sort_keys=True))
        if self.error:
            lines.append(json.dumps({"kind": "error", "message": self.error}, sort_keys=True))
        return lines

    def timing_lines(self) -> list[str]:
        return [
            json.dumps({"iteration": r.iteration, "policy": r.policy, **r.timing}, sort_keys=True)
            for r in self.records
        ]


def lookup_oracle(pool: CandidatePool, indices) -> np.ndarray:
    """Stored objective values for ``indices``, in the order given."""
    if not pool.has_oracle:
        raise DataError("pool has no oracle values")
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= len(pool)):
        raise DataError(f"oracle has no value for some of the requested indices (N={len(pool)})")
    return pool.oracle_values[idx].copy()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def run_campaign(pool: CandidatePool, cfg: CampaignConfig, oracle: Oracle | None = None) -> CampaignState:
    """Run a full campaign: random seed batch, then ``cfg.iterations`` BO rounds."""
    N = len(pool)
    cfg.validate(N)
    if oracle is None:
        if not pool.has_oracle:
            raise DataError("no oracle: pool lacks objective values and no callback was given")
        oracle = lambda idx: lookup_oracle(pool, idx)  # noqa: E731

    state = CampaignState(cfg)
    sign = cfg.sign
    pcfg = cfg.policy
    init_seed = derive_seed(cfg.seed, _SEED_INIT)
    state.rng_lineage = {"campaign_seed": cfg.seed, "init_seed": init_seed, "policy_seed": pcfg.seed}

    rng = np.random.default_rng(init_seed)
    first = np.sort(rng.choice(N, size=cfg.init_batch, replace=False))
    vals = np.asarray(oracle(first), dtype=np.float64)
    _check_values(vals, first)
    state.acquired.extend((int(i), float(v), 0) for i, v in zip(first, vals))
    state.seed_metrics = _snapshot(state, pool, cfg)

    acquired_mask = np.zeros(N, dtype=bool)
    acquired_mask[first] = True

    for t in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        fit_seed = derive_seed(cfg.seed, _SEED_FIT, t)
        acq_seed = derive_seed(cfg.seed, _SEED_ACQ, pcfg.seed, t)
        idx_tr = state.acquired_indices
        train = TrainingSet.from_pool(pool, idx_tr, state.acquired_values, sign)
        try:
            hp = fit(train, cfg.gp.restarts, fit_seed, cfg.gp.similarity)
            gp = FittedGP(train, hp, cfg.gp)
        except NumericError as exc:
            state.error = f"iteration {t}: surrogate fit failed: {exc}"
            raise NumericError(state.error, partial=state) from exc
        t_fit = time.perf_counter()

        unacq = np.flatnonzero(~acquired_mask)
        mu, sd = gp.marginals(pool, unacq)
        b = cfg.batch_size
        diag: dict = {"candidates": int(unacq.size)}
        incumbent = float(train.y.max())
        if pcfg.policy == "greedy":
            batch = unacq[acq.greedy_select(mu, b)]
        elif pcfg.policy == "ucb":
            batch = unacq[acq.ucb_select(mu, sd, pcfg.beta_ucb, b)]
        else:
            # kept as a set: candidate order must not depend on the prefilter metric
            cands = np.sort(unacq[acq.prefilter(mu, sd, pcfg)])
            diag["prefiltered"] = int(cands.size)
            if pcfg.policy == "random10k":
                batch = acq.random10k_select(cands, b, acq_seed)
            else:
                post = gp.joint(pool, cands)
                try:
                    res = acq.select(pcfg, post, b, incumbent, seed=acq_seed, threads=cfg.threads)
                except NumericError as exc:
                    state.error = f"iteration {t}: acquisition failed: {exc}"
                    raise NumericError(state.error, partial=state) from exc
                batch = cands[res.batch]
                diag.update(res.diagnostics)
        t_acq = time.perf_counter()

        vals = np.asarray(oracle(batch), dtype=np.float64)
        _check_values(vals, batch)
        acquired_mask[batch] = True
        state.acquired.extend((int(i), float(v), t) for i, v in zip(batch, vals))
        rec = IterationRecord(
            iteration=t,
            policy=pcfg.policy,
            selected=[int(i) for i in batch],
            ids=[pool.ids[i] for i in batch] if pool.ids is not None else None,
            values=[float(v) for v in vals],
            hyperparams=hp.to_dict(),
            diagnostics=_jsonable(diag),
            metrics=_snapshot(state, pool, cfg),
            rng={"fit_seed": fit_seed, "acq_seed": acq_seed},
        )
        rec.timing = {
            "fit_s": t_fit - t0,
            "acquire_s": t_acq - t_fit,
            "total_s": time.perf_counter() - t0,
        }
        state.records.append(rec)
        logger.info("iteration %d (%s): acquired %d", t, pcfg.policy, len(batch))
    return state


def _check_values(vals: np.ndarray, idx: np.ndarray) -> None:
    if vals.shape != idx.shape:
        raise DataError(f"oracle returned {vals.size} values for {idx.size} candidates")
    if not np.all(np.isfinite(vals)):
        raise DataError("oracle returned non-finite values")


def _snapshot(state: CampaignState, pool: CandidatePool, cfg: CampaignConfig) -> MetricSnapshot:
    if not pool.has_oracle:
        return MetricSnapshot()
    return snapshot(
        state.acquired_indices,
        state.acquired_values,
        state.acquired_iterations,
        pool,
        cfg.objective_direction,
        cfg.top_k,
        cfg.top_fractions,
    )


# ---------------------------------------------------------------------------
# Synthetic pools
# ---------------------------------------------------------------------------

GENERATORS = ("gp-draw", "sparse-linear", "multimodal")


def _random_fingerprint(rng, dim, n_bits, max_count=6):
    bits = rng.choice(dim, size=min(n_bits, dim), replace=False)
    counts = np.minimum(rng.geometric(0.55, size=bits.size), max_count)
    order = np.argsort(bits)
    return bits[order], counts[order]


def _random_fingerprints(rng, N, dim, bits_range=(8, 40)):
    out = []
    for _ in range(N):
        k = int(rng.integers(bits_range[0], bits_range[1] + 1))
        idx, cnt = _random_fingerprint(rng, dim, k)
        out.append(CountFingerprint(idx, cnt, dim))
    return out


def _motif_fingerprints(rng, N, dim, n_motifs, member_frac=0.6):
    motif_bits = max(4, dim // 20)
    motifs = [_random_fingerprint(rng, dim, motif_bits) for _ in range(n_motifs)]
    fps, labels = [], []
    for _ in range(N):
        if rng.random() < member_frac:
            c = int(rng.integers(n_motifs))
            mb, mc = motifs[c]
            keep = rng.random(mb.size) < 0.8
            entries = dict(zip(mb[keep].tolist(), (mc[keep] + rng.integers(-1, 2, keep.sum())).tolist()))
            nb, ncnt = _random_fingerprint(rng, dim, int(rng.integers(4, 16)))
            for i, v in zip(nb.tolist(), ncnt.tolist()):
                entries.setdefault(i, v)
            fp = CountFingerprint.from_entries(((i, v) for i, v in entries.items() if v >= 1), dim)
            labels.append(c)
        else:
            idx, cnt = _random_fingerprint(rng, dim, int(rng.integers(8, 40)))
            fp = CountFingerprint(idx, cnt, dim)
            labels.append(-1)
        fps.append(fp)
    motif_fps = [CountFingerprint(b_, c_, dim) for b_, c_ in motifs]
    return fps, motif_fps, np.array(labels)


def synthetic_pool(
    generator: str,
    N: int,
    dim: int,
    seed: int,
    weight_scale: float = 1.0,
    density: float = 0.1,
    n_motifs: int = 5,
) -> CandidatePool:
    """Random count fingerprints with a synthetic objective.

    ``gp-draw``
        One draw from the zero-mean unit-scale Tanimoto GP prior.
    ``sparse-linear``
        ``sum_j w_j * count_j`` with a fraction ``density`` of weights nonzero,
        each ``weight_scale * N(0, 1)``.
    ``multimodal``
        Candidates are planted around ``n_motifs`` motif fingerprints. The
        objective is a weak sparse-linear term plus a bonus per motif that
        grows with similarity to it; motif bonuses decrease from 1.0 so one
        mode holds the global optimum.
    """
    if generator not in GENERATORS:
        raise UsageError(f"unknown generator {generator!r}; valid: {', '.join(GENERATORS)}")
    if N < 1 or dim < 1:
        raise UsageError("N and dim must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) % (1 << 63), GENERATORS.index(generator)]))
    ids = [f"s{i}" for i in range(N)]
    if generator == "multimodal":
        fps, motifs, _ = _motif_fingerprints(rng, N, dim, n_motifs)
    else:
        fps = _random_fingerprints(rng, N, dim)

    if generator == "gp-draw":
        pool = CandidatePool(fps, dim, ids)
        X = pool.dense()
        K = tanimoto_matrix(X, X)
        L, _ = cholesky_with_jitter(0.5 * (K + K.T) + 1e-8 * np.eye(N))
        y = L @ rng.standard_normal(N)
    else:
        w = np.where(rng.random(dim) < density, rng.standard_normal(dim), 0.0) * weight_scale
        y = np.array([float(w[fp.indices] @ fp.counts) for fp in fps])
        if generator == "multimodal":
            y = 0.02 * y
            bonus = 1.0 - 0.15 * np.arange(n_motifs)
            pool = CandidatePool(fps, dim)
            S = tanimoto_matrix(pool.dense(), np.stack([m.to_dense().astype(float) for m in motifs]))
            y = y + (S**2 * bonus).sum(axis=1)
    return CandidatePool(fps, dim, ids, np.asarray(y, dtype=np.float64))
