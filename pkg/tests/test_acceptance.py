"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line."""

import itertools
import math
import os

import numpy as np
import pytest
from scipy.stats import norm

from qpo.acquisition import PolicyConfig, qpo_conditional_batch, qpo_scores, qpo_select
from qpo.cli import main
from qpo.fingerprints import CandidatePool, load_pool, write_pool
from qpo.gaussian import GaussianPosterior, prob_max_analytic, sample_joint
from qpo.loop import CampaignConfig, run_campaign, synthetic_pool
from qpo.metrics import fraction_top, mean_sem, top_count, true_top
from qpo.surrogate import GpHyperparams, TrainingSet, posterior
from qpo.toy import toy_check

from .conftest import ACCEPTANCE_LINES, random_fingerprints
from .oracles import dense_gp_posterior, random_gp_problem, relative_error


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def random_posterior(rng, n):
    A = rng.standard_normal((n, n))
    return GaussianPosterior(rng.normal(0, 1, n), A @ A.T + 0.05 * np.eye(n))


def test_criterion_1_toy_posterior():
    rep = toy_check(M=1_000_000, trials=100_000, seed=0)
    s = ", ".join(f"{v:.4f}" for v in rep.scores)
    pair12 = rep.pts_pairs.get((0, 1), 0)
    pair13 = rep.pts_pairs.get((0, 2), 0)
    detail = f"scores ({s}); qpo {sorted(rep.qpo_batch)}; greedy {sorted(rep.greedy_batch)}; pts {{x1,x2}}={pair12} {{x1,x3}}={pair13}"
    record(1, rep.ok, detail)


def test_criterion_2_additivity():
    rng = np.random.default_rng(2002)
    failures = 0
    for _ in range(200):
        n = int(rng.integers(1, 11))
        b = int(rng.integers(1, min(3, n) + 1))
        post = random_posterior(rng, n)
        scores = qpo_scores(sample_joint(post, 2000, int(rng.integers(1 << 62))))
        got = scores[qpo_select(scores, post.mean, b)].sum()
        best = max(scores[list(c)].sum() for c in itertools.combinations(range(n), b))
        failures += not math.isclose(got, best, rel_tol=0, abs_tol=1e-12)
    record(2, failures == 0, f"{200 - failures}/200 batches attain the exhaustive maximum")


def test_criterion_3_analytic_agreement():
    rng = np.random.default_rng(3003)
    M = 1_000_000
    worst = 0.0
    for _ in range(100):
        post = random_posterior(rng, 2)
        mc = qpo_scores(sample_joint(post, M, int(rng.integers(1 << 62))))[0]
        p = prob_max_analytic(post, 0)
        tol = 4 * math.sqrt(p * (1 - p) / M)
        worst = max(worst, abs(mc - p) / tol if tol > 0 else (0.0 if mc == p else math.inf))
    record(3, worst <= 1.0, f"max |MC - analytic| / (4 stderr) = {worst:.3f} over 100 posteriors")


def test_criterion_4_sampling_bounds():
    M, trials = 1000, 10_000
    # two independent unit-variance candidates; candidate 0 is optimal with p = 0.007
    gap = norm.ppf(0.007) * math.sqrt(2)
    post = GaussianPosterior(np.array([gap, 0.0]), np.eye(2))
    p = prob_max_analytic(post, 0)
    misses = sum(qpo_scores(sample_joint(post, M, 40_000 + t))[0] == 0.0 for t in range(trials))
    delta = 0.001
    miss_ok = misses / trials < delta + 3 * math.sqrt(delta / trials)

    alpha = 0.1
    eps = math.sqrt(math.log(2 / alpha) / (2 * M))
    post2 = GaussianPosterior(np.array([-0.5, 0.0]), np.eye(2))
    p2 = prob_max_analytic(post2, 0)
    covered = sum(
        abs(qpo_scores(sample_joint(post2, M, 90_000 + t))[0] - p2) <= eps for t in range(trials)
    )
    sigma = math.sqrt(alpha * (1 - alpha) / trials)
    cov_ok = covered / trials >= (1 - alpha) - 3 * sigma
    detail = (
        f"p={p:.4f} miss rate {misses / trials:.4%} (bound {delta + 3 * math.sqrt(delta / trials):.4%}); "
        f"Hoeffding eps={eps:.4f} coverage {covered / trials:.4f} (floor {(1 - alpha) - 3 * sigma:.4f})"
    )
    record(4, miss_ok and cov_ok, detail)


def test_criterion_5_conditional_equivalence():
    rng = np.random.default_rng(5005)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(2, 9))
        b = int(rng.integers(1, min(3, n) + 1))
        post = random_posterior(rng, n)
        Y = sample_joint(post, 5000, int(rng.integers(1 << 62)))
        a = set(qpo_select(qpo_scores(Y), post.mean, b).tolist())
        c = set(qpo_conditional_batch(Y, b, post.mean).tolist())
        mismatches += a != c
    record(5, mismatches == 0, f"{100 - mismatches}/100 batch sets identical")


def test_criterion_6_surrogate():
    worst = 0.0
    var_ok = True
    for seed in range(50):
        pool, train, hp, test = random_gp_problem(6000 + seed)
        post = posterior(train, hp, pool, test)
        mu, cov = dense_gp_posterior(train.inputs, train.y, [pool.candidates[i] for i in test], hp)
        worst = max(worst, relative_error(post.mean, mu), relative_error(post.covariance, cov))
        var_ok &= bool(np.all(np.diag(post.covariance) <= hp.output_scale + 1e-8))

    rng = np.random.default_rng(6100)
    fps = random_fingerprints(rng, 30, dim=64)
    pool = CandidatePool(fps + fps[:5], 64)
    y = rng.normal(size=30)
    train = TrainingSet.from_pool(pool, np.arange(30), y)
    hp = GpHyperparams(0.0, 1.0, 1e-6)
    post = posterior(train, hp, pool, np.arange(30, 35))
    interp = float(np.abs(post.mean - y[:5]).max())
    ok = worst < 1e-8 and var_ok and interp <= 1e-3
    detail = f"max rel err {worst:.2e}; variance <= prior: {var_ok}; interpolation err {interp:.2e}"
    record(6, ok, detail)


@pytest.mark.slow
def test_criterion_7_campaign_benchmark():
    pool = synthetic_pool("multimodal", 2000, 256, seed=0)
    seeds = range(10)
    finals = {}
    monotone = True
    completed = {}
    for policy in ("qpo", "random10k", "greedy", "ucb", "pts"):
        vals = []
        for s in seeds:
            cfg = CampaignConfig(
                seed=s, init_batch=50, batch_size=25, iterations=8, policy=PolicyConfig(policy=policy)
            )
            state = run_campaign(pool, cfg)
            curve = [state.seed_metrics.fraction_top[0.01]] + [r.metrics.fraction_top[0.01] for r in state.records]
            monotone &= bool(np.all(np.diff(curve) >= 0))
            vals.append(curve[-1])
        finals[policy] = mean_sem(vals)
        completed[policy] = len(vals)
    (mq, sq), (mr, sr) = finals["qpo"], finals["random10k"]
    pooled = math.sqrt(sq**2 + sr**2)
    ok = mq - mr >= 2 * pooled and monotone and all(c == 10 for c in completed.values())
    summary = "; ".join(f"{k} {m:.3f}+/-{s:.3f}" for k, (m, s) in finals.items())
    record(7, ok, f"final frac-top-1%: {summary}; gap {(mq - mr) / pooled:.1f} pooled SEM; monotone: {monotone}")


def test_criterion_8_denominator(tmp_path):
    N = 39312
    rng = np.random.default_rng(8008)
    fps = random_fingerprints(rng, N, dim=16, max_bits=4)
    src = CandidatePool(fps, 16, [f"c{i}" for i in range(N)], rng.normal(size=N))
    path = tmp_path / "antibiotic_shaped.csv"
    write_pool(src, path)
    pool = load_pool(path, 16)
    top = true_top(pool.oracle_values, 0.005)
    frac = fraction_top(top[:-1], pool, 0.005)
    ok = len(pool) == N and top_count(N, 0.005) == 197 and top.size == 197 and frac == 196 / 197
    record(8, ok, f"N={len(pool)}; top-0.5% denominator {top.size}; 196 hits -> {frac:.6f}")


def test_criterion_9_determinism(tmp_path):
    cfg = tmp_path / "manifest.ini"
    cfg.write_text(
        "[campaign]\ninit_batch = 20\nbatch_size = 10\niterations = 3\n"
        "[policy]\nM = 2000\n"
        "[dataset]\ngenerator = multimodal\nN = 300\ndimension = 128\nseed = 4\n"
        "[run]\nseeds = 0, 1\npolicies = qpo, qpo-conditional, pts, qei, tsrsr, random10k\n"
    )
    runs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(["run", "--config", str(cfg), "--out", str(out), "--no-figures"]) == 0
        runs.append({f: (out / "logs" / f).read_bytes() for f in sorted(os.listdir(out / "logs"))})
    same = runs[0].keys() == runs[1].keys() and all(runs[0][k] == runs[1][k] for k in runs[0])
    record(9, same and len(runs[0]) == 12, f"{len(runs[0])} acquisition logs byte-identical: {same}")
