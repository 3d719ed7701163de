"""Three-candidate toy posterior contrasting qPO, greedy and parallel Thompson sampling.

Candidates 0 and 1 are almost perfectly correlated with means 10 and 5;
candidate 2 is independent with mean 0 and unit variance.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .acquisition import greedy_select, pts_select, qpo_scores, qpo_select
from .gaussian import GaussianPosterior, sample_joint

TOY_MEAN = np.array([10.0, 5.0, 0.0])
TOY_COV = np.array([[101.0, 100.0, 0.0], [100.0, 101.0, 0.0], [0.0, 0.0, 1.0]])
EXPECTED_SCORES = (0.84, 0.00, 0.16)
SCORE_TOL = 0.005


def toy_posterior() -> GaussianPosterior:
    return GaussianPosterior(TOY_MEAN.copy(), TOY_COV.copy())


@dataclass
class ToyReport:
    scores: np.ndarray
    qpo_batch: tuple
    greedy_batch: tuple
    pts_pairs: dict
    trials: int

    @property
    def scores_ok(self) -> bool:
        return bool(np.all(np.abs(self.scores - np.array(EXPECTED_SCORES)) <= SCORE_TOL))

    @property
    def qpo_ok(self) -> bool:
        return set(self.qpo_batch) == {0, 2}

    @property
    def greedy_ok(self) -> bool:
        return set(self.greedy_batch) == {0, 1}

    @property
    def pts_ok(self) -> bool:
        return self.pts_pairs.get((0, 1), 0) > self.pts_pairs.get((0, 2), 0)

    @property
    def ok(self) -> bool:
        return self.scores_ok and self.qpo_ok and self.greedy_ok and self.pts_ok

    def lines(self) -> list[str]:
        fmt = lambda ok: "PASS" if ok else "FAIL"  # noqa: E731
        s = ", ".join(f"{v:.4f}" for v in self.scores)
        out = [
            f"qpo scores      : ({s})  expected ({', '.join(map(str, EXPECTED_SCORES))}) +/- {SCORE_TOL}  {fmt(self.scores_ok)}",
            f"qpo batch (b=2) : {{{', '.join(f'x{i + 1}' for i in sorted(self.qpo_batch))}}}  {fmt(self.qpo_ok)}",
            f"greedy (b=2)    : {{{', '.join(f'x{i + 1}' for i in sorted(self.greedy_batch))}}}  {fmt(self.greedy_ok)}",
        ]
        for pair in sorted(self.pts_pairs):
            out.append(
                f"pts pair {{x{pair[0] + 1}, x{pair[1] + 1}}} : {self.pts_pairs[pair]} / {self.trials}"
            )
        out.append(f"pts prefers {{x1, x2}} over {{x1, x3}}  {fmt(self.pts_ok)}")
        return out


def pts_pair_counts(post: GaussianPosterior, trials: int, seed: int) -> Counter:
    """Unordered pTS b=2 batches over ``trials`` independent pairs of samples."""
    Y = sample_joint(post, 2 * trials, seed).values
    counts: Counter = Counter()
    for t in range(trials):
        batch = pts_select(Y[2 * t : 2 * t + 2], 2)
        counts[tuple(sorted(int(i) for i in batch))] += 1
    return counts


def toy_check(M: int = 1_000_000, trials: int = 100_000, seed: int = 0) -> ToyReport:
    post = toy_posterior()
    scores = qpo_scores(sample_joint(post, M, seed))
    return ToyReport(
        scores=scores,
        qpo_batch=tuple(int(i) for i in qpo_select(scores, post.mean, 2)),
        greedy_batch=tuple(int(i) for i in greedy_select(post.mean, 2)),
        pts_pairs=dict(pts_pair_counts(post, trials, seed + 1)),
        trials=trials,
    )
