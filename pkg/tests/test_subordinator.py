import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sbmfk import bernstein as bs
from sbmfk.errors import ArgumentError, ResourceError, UnsupportedError
from sbmfk.rng import block_rng
from sbmfk.subordinator import (
    JUMP_BUDGET, make_sampler, measure_acceptance, sample_increment, sample_many, verify_laplace,
    verify_laplace_grid,
)

from oracles import half_stable_subordinator


class TestLaws:
    @pytest.mark.parametrize("spec,u,t,target", [
        (bs.stable(1.0), 1.0, 1.0, math.exp(-1)),
        (bs.relativistic(1.0, 1.0), 3.0, 2.0, math.exp(-2)),
        (bs.stable_sum(1.0, 0.5), 1.0, 1.0, math.exp(-2)),
    ])
    def test_laplace_transform(self, spec, u, t, target):
        chk = verify_laplace(make_sampler(spec, seed=11), u, t, 200_000)
        assert chk.target == pytest.approx(target, rel=1e-12)
        assert abs(chk.z_score) < 4

    def test_half_stable_matches_levy_law(self):
        s = sample_many(make_sampler(bs.stable(1.0), seed=5), 1.0, 100_000)
        assert stats.kstest(s, half_stable_subordinator(1.0).cdf).statistic < 0.01

    @pytest.mark.parametrize("alpha", [0.5, 1.5])
    def test_self_similarity(self, alpha):
        # S_t has the law of t^{2/alpha} S_1
        a = sample_many(make_sampler(bs.stable(alpha), seed=1), 3.0, 50_000)
        b = 3.0 ** (2 / alpha) * sample_many(make_sampler(bs.stable(alpha), seed=2), 1.0, 50_000)
        assert stats.ks_2samp(a, b).pvalue > 1e-3

    def test_linear_is_deterministic(self):
        assert sample_increment(make_sampler(bs.linear()), 2.0) == 2.0

    def test_brownian_limit_of_stable(self):
        assert np.all(sample_many(make_sampler(bs.stable(2.0)), 0.5, 100) == 0.5)

    def test_relativistic_acceptance(self):
        est = measure_acceptance(make_sampler(bs.relativistic(1.0, 1.0), seed=2), 1.0, 100_000)
        assert abs(est.z_score(math.exp(-1))) < 4

    def test_split_separates_drift(self):
        sp = make_sampler(bs.stable_sum(2.0, 1.0), seed=1)
        dc, dj = sp.split(0.3, 1000, block_rng(1, 0, 0))
        assert np.all(dc == 0.3)
        assert np.all(dj > 0)


class TestProperties:
    @settings(max_examples=15, deadline=None)
    @given(alpha=st.sampled_from([0.5, 1.0, 1.5]), t=st.floats(1e-3, 10.0), seed=st.integers(0, 2**32))
    def test_increments_positive(self, alpha, t, seed):
        for spec in (bs.stable(alpha), bs.relativistic(alpha, 1.0), bs.stable_sum(alpha, 1.0)):
            s = sample_many(make_sampler(spec, seed=seed), t, 256)
            assert np.all(s > 0) and np.all(np.isfinite(s))

    @settings(max_examples=5, deadline=None)
    @given(seed=st.integers(0, 2**32), workers=st.integers(2, 8))
    def test_reproducible_across_workers(self, seed, workers):
        sp = make_sampler(bs.relativistic(1.0, 2.0), seed=seed, stream=3)
        n = 40_000
        assert np.array_equal(sample_many(sp, 1.0, n, workers=1), sample_many(sp, 1.0, n, workers=workers))


class TestCustom:
    def test_tabulated_stable_law(self):
        tab = bs.tabulate(bs.stable(1.0))
        s = sample_many(make_sampler(tab, seed=3), 1.0, 100_000)
        assert stats.kstest(s, half_stable_subordinator(1.0).cdf).statistic < 0.01

    def test_truncation_converges(self):
        tab = bs.tabulate(bs.stable(1.0))
        ref = half_stable_subordinator(1.0).cdf
        eps = [0.2, 0.1, 0.05, 0.025]
        draws = [sample_many(make_sampler(tab, epsilon=e, seed=3), 1.0, 100_000) for e in eps]
        to_truth = [stats.kstest(s, ref).statistic for s in draws]
        halvings = [stats.ks_2samp(a, b).statistic for a, b in zip(draws[:-1], draws[1:])]
        assert all(np.diff(to_truth) < 0)
        assert all(np.diff(halvings) < 0)

    def test_jump_budget(self):
        tab = bs.tabulate(bs.stable(1.0))
        with pytest.raises(ResourceError):
            # rate ~ eps^{-1/2}/sqrt(pi) per unit time
            make_sampler(tab, epsilon=1e-14, seed=1).increments(1.0, JUMP_BUDGET // 100, block_rng(1, 0, 0))

    def test_grid_reuses_samples_per_time(self):
        checks = verify_laplace_grid(make_sampler(bs.stable(1.0), seed=1), [0.5, 1.0], [0.5, 1.0], 20_000)
        assert len(checks) == 4
        assert all(abs(c.z_score) < 4 for c in checks)


class TestErrors:
    def test_log_families_unsupported(self):
        with pytest.raises(UnsupportedError):
            make_sampler(bs.log_damped(1.0, 0.5))

    def test_small_n(self):
        with pytest.raises(ArgumentError):
            verify_laplace(make_sampler(bs.stable(1.0)), 1.0, 1.0, 10)

    def test_bad_epsilon(self):
        with pytest.raises(ArgumentError):
            make_sampler(bs.tabulate(bs.stable(1.0)), epsilon=0.0)

    def test_acceptance_only_for_rejection(self):
        with pytest.raises(UnsupportedError):
            measure_acceptance(make_sampler(bs.stable(1.0)), 1.0, 1000)
