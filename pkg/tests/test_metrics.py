import math

import numpy as np
import pytest

from qpo.errors import DataError, UsageError
from qpo.fingerprints import CandidatePool, CountFingerprint
from qpo.metrics import (
    cumulative_regret,
    diversity_stats,
    fraction_top,
    mean_sem,
    regret_curve,
    snapshot,
    top_count,
    top_k_average,
    true_top,
)


def fp(entries, dim=8):
    return CountFingerprint.from_entries(entries.items(), dim)


class TestTopK:
    def test_minimize(self):
        assert top_k_average([0.1, 0.5, 0.3], 2, "min") == pytest.approx(0.2)

    def test_maximize(self):
        assert top_k_average([0.1, 0.5, 0.3], 2) == pytest.approx(0.4)

    def test_full_is_mean(self):
        v = [3.0, -1.0, 4.0, 1.5]
        assert top_k_average(v, 4) == pytest.approx(np.mean(v))

    def test_constant(self):
        assert top_k_average([2.5] * 6, 3) == 2.5

    def test_too_few(self):
        with pytest.raises(UsageError):
            top_k_average([1.0], 2)

    def test_bad_direction(self):
        with pytest.raises(UsageError):
            top_k_average([1.0], 1, "up")


class TestFractionTop:
    def test_denominator_half_percent(self):
        assert top_count(39312, 0.005) == 197

    def test_denominator_one_percent(self):
        # ceil(393.12)
        assert top_count(39312, 0.01) == 394

    def test_small_pools(self):
        assert top_count(100, 0.01) == 1
        assert top_count(10, 0.005) == 1
        assert top_count(0, 0.01) == 0

    def test_whole_pool(self, rng):
        v = rng.normal(size=300)
        assert fraction_top(np.arange(300), v, 0.01) == 1.0

    def test_disjoint(self):
        v = np.arange(100.0)
        assert fraction_top([0, 1, 2], v, 0.05) == 0.0

    def test_partial(self):
        v = np.arange(200.0)
        # top 1% = indices 199, 198
        assert fraction_top([199, 5], v, 0.01) == 0.5
        assert fraction_top([0], v, 0.01, "min") == 0.5

    def test_ties_by_index(self):
        assert true_top([1.0, 3.0, 3.0, 3.0], 0.5).tolist() == [1, 2]

    def test_missing_oracle(self):
        with pytest.raises(DataError):
            fraction_top([0], CandidatePool([fp({0: 1})], 8), 0.5)


class TestRegret:
    def test_hand_example(self):
        curve = regret_curve([0.0, 0.75], [0, 1], optimum=1.0)
        np.testing.assert_allclose(curve, [1.0, 0.25])
        assert curve.sum() == pytest.approx(1.25)

    def test_minimize(self):
        curve = regret_curve([3.0, 2.0, 5.0], [0, 1, 2], optimum=1.0, direction="min")
        np.testing.assert_allclose(curve, [2.0, 1.0, 1.0])

    def test_optimum_in_seed(self):
        assert regret_curve([5.0, 1.0, 2.0], [0, 1, 2], 5.0).sum() == 0.0

    def test_nonincreasing(self, rng):
        v = rng.normal(size=60)
        it = np.repeat(np.arange(6), 10)
        curve = regret_curve(v, it, 5.0)
        assert np.all(np.diff(curve) <= 0) and np.all(curve >= 0)

    def test_empty(self):
        with pytest.raises(UsageError):
            regret_curve([], [], 0.0)


class TestCumulativeRegretState:
    def test_from_state(self):
        from qpo.loop import CampaignConfig, CampaignState

        pool = CandidatePool([fp({i: 1}) for i in range(4)], 8, oracle_values=[0.0, 0.75, 1.0, 0.2])
        state = CampaignState(CampaignConfig(init_batch=2, batch_size=1, iterations=1))
        state.acquired = [(0, 0.0, 0), (3, 0.2, 0), (1, 0.75, 1)]
        assert cumulative_regret(state, pool) == pytest.approx(0.8 + 0.25)

    def test_constant_pool(self):
        from qpo.loop import CampaignConfig, CampaignState

        pool = CandidatePool([fp({i: 1}) for i in range(3)], 8, oracle_values=[2.0, 2.0, 2.0])
        state = CampaignState(CampaignConfig())
        state.acquired = [(0, 2.0, 0), (1, 2.0, 1)]
        assert cumulative_regret(state, pool) == 0.0


class TestDiversity:
    def test_hand_similarities(self):
        pool = CandidatePool([fp({0: 1, 1: 1}), fp({0: 1, 2: 1}), fp({2: 1})], 8)
        st = diversity_stats(pool, [0, 1, 2])
        np.testing.assert_allclose(st.similarities, [1 / 3, 0.0, 0.5])
        assert (st.similarities < 0.4).sum() == 2
        assert st.edges == [(1, 2, 0.5)]
        assert st.counts.sum() == 3
        assert st.counts[0] == 1 and st.counts[6] == 1 and st.counts[10] == 1

    def test_disjoint(self):
        pool = CandidatePool([fp({i: 1}) for i in range(5)], 8)
        st = diversity_stats(pool, range(5))
        assert st.counts[0] == 10 and st.counts.sum() == 10 and st.edges == []

    def test_identical(self):
        pool = CandidatePool([fp({0: 2, 3: 1})] * 4, 8)
        st = diversity_stats(pool, range(4))
        assert st.counts[-1] == 6 and len(st.edges) == 6

    def test_counts_sum(self, small_pool, rng):
        for b in (2, 5, 17):
            batch = rng.choice(len(small_pool), b, replace=False)
            assert diversity_stats(small_pool, batch).counts.sum() == math.comb(b, 2)

    def test_too_small(self, small_pool):
        with pytest.raises(UsageError):
            diversity_stats(small_pool, [3])


class TestMeanSem:
    def test_hand(self):
        m, s = mean_sem([1.0, 2.0, 4.0])
        assert m == pytest.approx(7 / 3)
        # sample std sqrt(7/3), divided by sqrt(3)
        assert s == pytest.approx(math.sqrt(7 / 3) / math.sqrt(3))
        assert s == pytest.approx(0.8819171036881969)

    def test_single(self):
        assert mean_sem([5.0]) == (5.0, 0.0)

    def test_empty(self):
        m, s = mean_sem([])
        assert math.isnan(m) and math.isnan(s)


class TestSnapshot:
    def test_keys(self, small_pool):
        idx = np.arange(12)
        snap = snapshot(idx, small_pool.oracle_values[idx], np.zeros(12, int), small_pool, "max", ks=(10, 100))
        assert set(snap.top_k_avg) == {10}
        assert set(snap.fraction_top) == {0.005, 0.01}
        d = snap.to_dict()
        assert d["top_k_avg"].keys() == {"10"}
