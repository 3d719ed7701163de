import json

import numpy as np
import pytest
from scipy.stats import spearmanr

from qpo.acquisition import POLICIES, PolicyConfig
from qpo.errors import DataError, NumericError, UsageError
from qpo.fingerprints import CandidatePool, tanimoto_matrix
from qpo.loop import (
    GENERATORS,
    CampaignConfig,
    derive_seed,
    lookup_oracle,
    run_campaign,
    synthetic_pool,
)
from qpo.surrogate import GpConfig


def small_cfg(policy="qpo", **kw):
    base = dict(
        seed=1,
        init_batch=10,
        batch_size=5,
        iterations=3,
        policy=policy if isinstance(policy, PolicyConfig) else PolicyConfig(policy=policy, M=500),
        gp=GpConfig(restarts=2),
    )
    base.update(kw)
    return CampaignConfig(**base)


@pytest.fixture(scope="module")
def pool():
    return synthetic_pool("multimodal", 120, 64, seed=3)


class TestConfig:
    def test_capacity(self):
        with pytest.raises(UsageError, match="exceeds"):
            small_cfg().validate(20)

    @pytest.mark.parametrize(
        "kw",
        [
            {"init_batch": 0},
            {"batch_size": 0},
            {"iterations": -1},
            {"objective_direction": "up"},
            {"init_batch": 1},
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(UsageError):
            small_cfg(**kw).validate(1000)

    def test_prefilter_smaller_than_batch(self):
        cfg = small_cfg(policy=PolicyConfig(prefilter_size=4))
        with pytest.raises(UsageError, match="prefilter_size"):
            cfg.validate(1000)

    def test_derive_seed(self):
        assert derive_seed(1, 2) == derive_seed(1, 2)
        assert derive_seed(1, 2) != derive_seed(2, 1)
        assert 0 <= derive_seed(5) < 2**63


class TestLookupOracle:
    def test_values(self, pool):
        assert lookup_oracle(pool, [4])[0] == pool.oracle_values[4]

    def test_repeat_and_order(self, pool):
        out = lookup_oracle(pool, [7, 2, 7])
        np.testing.assert_array_equal(out, pool.oracle_values[[7, 2, 7]])

    def test_missing(self, pool):
        with pytest.raises(DataError):
            lookup_oracle(pool, [len(pool)])
        bare = CandidatePool(pool.candidates[:3], pool.dimension)
        with pytest.raises(DataError):
            lookup_oracle(bare, [0])


class TestRunCampaign:
    def test_zero_iterations(self, pool):
        state = run_campaign(pool, small_cfg(iterations=0))
        assert len(state.acquired) == 10 and state.records == []
        assert set(state.acquired_iterations.tolist()) == {0}

    @pytest.mark.parametrize("policy", POLICIES)
    def test_exhaustion(self, policy):
        pool = synthetic_pool("sparse-linear", 30, 32, seed=0)
        cfg = small_cfg(policy, init_batch=20, batch_size=10, iterations=1)
        state = run_campaign(pool, cfg)
        assert sorted(state.acquired_indices.tolist()) == list(range(30))

    def test_greedy_finds_optimum_by_exhaustion(self):
        pool = synthetic_pool("gp-draw", 40, 32, seed=2)
        cfg = small_cfg("greedy", init_batch=10, batch_size=10, iterations=3)
        state = run_campaign(pool, cfg)
        assert int(np.argmax(pool.oracle_values)) in state.acquired_indices
        assert state.records[-1].metrics.simple_regret == 0.0

    @pytest.mark.parametrize("policy", ["qpo", "pts", "qei", "random10k", "ucb"])
    def test_invariants(self, pool, policy):
        cfg = small_cfg(policy)
        state = run_campaign(pool, cfg)
        idx = state.acquired_indices
        assert len(set(idx.tolist())) == idx.size
        assert len(state.records) == cfg.iterations
        for t, rec in enumerate(state.records, start=1):
            assert rec.iteration == t
            assert (state.acquired_iterations <= t).sum() == cfg.init_batch + t * cfg.batch_size
        frac = [r.metrics.fraction_top[0.01] for r in state.records]
        assert all(0 <= f <= 1 for f in frac)
        assert np.all(np.diff(frac) >= 0)
        regret = [state.seed_metrics.simple_regret] + [r.metrics.simple_regret for r in state.records]
        assert np.all(np.diff(regret) <= 0)

    def test_deterministic(self, pool):
        a = run_campaign(pool, small_cfg())
        b = run_campaign(pool, small_cfg())
        assert a.log_lines() == b.log_lines()
        c = run_campaign(pool, small_cfg(seed=2))
        assert c.acquired_indices.tolist() != a.acquired_indices.tolist()

    def test_threads_do_not_change_log(self, pool):
        a = run_campaign(pool, small_cfg(threads=1))
        b = run_campaign(pool, small_cfg(threads=3))
        assert a.log_lines() == b.log_lines()

    def test_log_structure(self, pool):
        state = run_campaign(pool, small_cfg())
        lines = [json.loads(l) for l in state.log_lines()]
        assert lines[0]["kind"] == "campaign" and len(lines[0]["seed_batch"]) == 10
        rec = lines[1]
        for key in ("iteration", "policy", "selected", "ids", "values", "hyperparams", "metrics", "rng"):
            assert key in rec
        assert "timing" not in rec
        timing = [json.loads(l) for l in state.timing_lines()]
        assert {"fit_s", "acquire_s", "total_s"} <= timing[0].keys()

    def test_minimize(self, pool):
        cfg = small_cfg("greedy", objective_direction="min")
        state = run_campaign(pool, cfg)
        assert state.records[-1].metrics.fraction_top[0.01] >= 0

    def test_small_prefilter(self, pool):
        cfg = small_cfg(policy=PolicyConfig(M=300, prefilter_size=8))
        state = run_campaign(pool, cfg)
        assert all(r.diagnostics["prefiltered"] == 8 for r in state.records)

    def test_callback_oracle(self, pool):
        calls = []

        def oracle(idx):
            calls.append(np.asarray(idx).copy())
            return pool.oracle_values[idx]

        bare = CandidatePool(pool.candidates, pool.dimension)
        state = run_campaign(bare, small_cfg(), oracle=oracle)
        assert len(calls) == 4
        assert state.seed_metrics.fraction_top == {}

    def test_no_oracle(self, pool):
        with pytest.raises(DataError):
            run_campaign(CandidatePool(pool.candidates, pool.dimension), small_cfg())

    def test_bad_oracle_values(self, pool):
        with pytest.raises(DataError):
            run_campaign(pool, small_cfg(), oracle=lambda idx: np.full(len(idx), np.nan))

    def test_fit_failure_keeps_partial_state(self, pool, monkeypatch):
        import qpo.loop as loop

        def boom(*a, **k):
            raise NumericError("synthetic failure")

        monkeypatch.setattr(loop, "fit", boom)
        with pytest.raises(NumericError) as err:
            run_campaign(pool, small_cfg())
        partial = err.value.partial
        assert len(partial.acquired) == 10 and "surrogate fit failed" in partial.error


class TestSyntheticPool:
    @pytest.mark.parametrize("gen", GENERATORS)
    def test_deterministic(self, gen):
        a = synthetic_pool(gen, 50, 32, seed=4)
        b = synthetic_pool(gen, 50, 32, seed=4)
        assert all(x == y for x, y in zip(a.candidates, b.candidates))
        np.testing.assert_array_equal(a.oracle_values, b.oracle_values)
        assert len(a) == 50 and a.dimension == 32

    def test_zero_weights(self):
        pool = synthetic_pool("sparse-linear", 40, 32, seed=1, weight_scale=0.0)
        assert np.ptp(pool.oracle_values) == 0.0

    def test_unknown(self):
        with pytest.raises(UsageError):
            synthetic_pool("smiles", 10, 8, 0)

    def test_gp_draw_follows_kernel(self):
        for seed in range(10):
            pool = synthetic_pool("gp-draw", 500, 128, seed=seed)
            X = pool.dense()
            S = tanimoto_matrix(X, X)
            y = pool.oracle_values
            iu, ju = np.triu_indices(len(pool), 1)
            rho = spearmanr(S[iu, ju], -np.abs(y[iu] - y[ju])).statistic
            assert rho > 0

    def test_multimodal_has_modes(self):
        pool = synthetic_pool("multimodal", 400, 128, seed=0)
        y = pool.oracle_values
        assert np.ptp(y) > 0.3
