import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbmfk import bernstein as bs
from sbmfk.config import SolverConfig
from sbmfk.errors import ArgumentError, UnsupportedError
from sbmfk.fk_solver import (
    Potential, SourceTerm, abp_bound, check_subsolution, elliptic_abp_rhs, harmonic_extension, lp_norm,
    parabolic_abp_bound, parabolic_abp_rhs, refined_abp_check, solution_table, solve_dirichlet, solve_parabolic,
)
from sbmfk.sbm import Ball, Box, Interval

from oracles import brownian_discounted_torsion, brownian_survival, getoor_mean_exit

D = Interval(-1.0, 1.0)
HEAT = (1 / math.pi, 0.05066059182116889, 2 * math.pi)


def cfg(n=20_000, seed=1, **kw):
    return SolverConfig(n_paths=n, seed=seed, **kw)


def torsion(y):
    y = np.asarray(y, dtype=float).reshape(-1)
    return np.where(np.abs(y) < 1, (1 - y * y) / 2, 0.0)


class TestElliptic:
    def test_brownian_torsion(self):
        est = solve_dirichlet(bs.linear(), D, None, 1.0, 0.0, cfg())
        assert abs(est.z_score(0.5)) < 3

    def test_cauchy_torsion(self):
        est = solve_dirichlet(bs.stable(1.0), D, None, 1.0, 0.0, cfg())
        assert abs(est.z_score(getoor_mean_exit(1.0, 1, 1.0, 0.0))) < 3

    @pytest.mark.parametrize("c,x", [(2.0, 0.3), (0.5, -0.6)])
    def test_constant_potential(self, c, x):
        est = solve_dirichlet(bs.linear(), D, c, 1.0, x, cfg())
        assert abs(est.z_score(brownian_discounted_torsion(c, x))) < 3

    def test_zero_source_is_exact(self):
        est = solve_dirichlet(bs.stable(1.0), D, None, 0.0, 0.2, cfg(100))
        assert (est.mean, est.stderr) == (0.0, 0.0)
        assert "deterministic" in est.flags

    def test_outside_point(self):
        assert solve_dirichlet(bs.linear(), D, None, 1.0, 1.5, cfg(100)).mean == 0.0

    def test_negative_potential_rejected(self):
        with pytest.raises(UnsupportedError):
            solve_dirichlet(bs.linear(), D, -1.0, 1.0, 0.0, cfg(100))

    def test_linearity_in_source(self):
        c = cfg(2000, seed=3)
        a = solve_dirichlet(bs.stable(1.5), D, 1.0, 1.0, 0.1, c)
        b = solve_dirichlet(bs.stable(1.5), D, 1.0, SourceTerm.constant(3.0), 0.1, c)
        assert b.mean == pytest.approx(3 * a.mean, rel=1e-12)

    def test_potential_decreases_solution(self):
        c = cfg(2000, seed=3)
        a = solve_dirichlet(bs.stable(1.5), D, None, 1.0, 0.1, c)
        b = solve_dirichlet(bs.stable(1.5), D, Potential.constant(2.0), 1.0, 0.1, c)
        assert b.mean < a.mean

    def test_table(self):
        rows = solution_table(bs.linear(), D, None, 1.0, [[-0.5], [0.0]], cfg(2000))
        assert [r[0] for r in rows] == [-0.5, 0.0]
        assert all(len(r) == 3 for r in rows)


class TestHarmonic:
    def test_brownian_right_exit(self):
        est = harmonic_extension(bs.linear(), D, lambda y: (y[:, 0] >= 1).astype(float), 0.5, cfg())
        assert abs(est.z_score(0.75)) < 3

    def test_cauchy_symmetry(self):
        est = harmonic_extension(bs.stable(1.0), D, lambda y: (y[:, 0] > 0).astype(float), 0.0, cfg())
        assert abs(est.z_score(0.5)) < 3

    def test_constant_data(self):
        est = harmonic_extension(bs.stable(0.8), D, lambda y: np.full(y.shape[0], 2.0), 0.3, cfg(1000))
        assert est.mean == 2.0

    def test_outside_returns_data(self):
        est = harmonic_extension(bs.stable(1.0), D, lambda y: y[:, 0] ** 2, 3.0, cfg(100))
        assert est.mean == 9.0

    def test_zero_data_in_ball(self):
        est = harmonic_extension(bs.stable(1.0), Ball((0.0, 0.0), 1.0), lambda y: np.zeros(y.shape[0]),
                                 [0.0, 0.0], cfg(500))
        assert est.mean == 0.0


class TestSubsolution:
    def test_exact_solution_is_consistent(self):
        rep = check_subsolution(torsion, bs.linear(), D, None, 1.0, [[-0.5], [0.0], [0.4]], 0.1, cfg(10_000))
        assert rep.consistent
        assert rep.witnesses() == []

    def test_inflated_candidate_is_flagged(self):
        rep = check_subsolution(lambda y: 4 * torsion(y), bs.linear(), D, None, 1.0, [[0.0]], 0.1, cfg(10_000))
        assert not rep.consistent
        assert rep.witnesses()[0]["z"] > rep.threshold

    def test_zero_subsolution_of_positive_source(self):
        rep = check_subsolution(lambda y: np.zeros(np.asarray(y).shape[0]), bs.stable(1.0), D, 1.0, 1.0,
                                [[0.0]], 0.05, cfg(2000))
        assert rep.consistent

    def test_arguments(self):
        with pytest.raises(ArgumentError):
            check_subsolution(torsion, bs.linear(), D, None, 1.0, [[0.0]], 0.0, cfg(100))
        with pytest.raises(ArgumentError):
            check_subsolution(torsion, bs.linear(), D, None, 1.0, [[2.0]], 0.1, cfg(100))


class TestParabolic:
    def test_long_horizon_is_elliptic(self):
        est = solve_parabolic(bs.linear(), D, None, 1.0, None, 10.0, 0.0, 0.0, cfg())
        assert abs(est.z_score(0.5)) < 3

    def test_short_horizon(self):
        est = solve_parabolic(bs.linear(), D, None, 1.0, None, 0.01, 0.0, 0.0, cfg(2000))
        assert est.mean <= 0.01 + 1e-12

    def test_survival(self):
        one = lambda y: np.ones(np.asarray(y).shape[0])  # noqa: E731
        est = solve_parabolic(bs.linear(), D, None, 0.0, one, 1.0, 0.7, 0.0, cfg())
        assert abs(est.z_score(brownian_survival(0.3))) < 3

    def test_terminal_time(self):
        est = solve_parabolic(bs.linear(), D, None, 1.0, lambda y: np.full(np.asarray(y).shape[0], 7.0),
                              1.0, 1.0, 0.0, cfg(100))
        assert est.mean == 7.0

    def test_bad_times(self):
        with pytest.raises(ArgumentError):
            solve_parabolic(bs.linear(), D, None, 1.0, None, 1.0, 1.5, 0.0, cfg(100))
        with pytest.raises(ArgumentError):
            solve_parabolic(bs.linear(), D, None, 1.0, None, 1.0, -0.1, 0.0, cfg(100))


class TestNorm:
    def test_constant_on_interval(self):
        assert lp_norm(lambda x: np.ones(x.shape[0]), D, 2.0) == pytest.approx(math.sqrt(2), rel=1e-12)

    def test_polynomial(self):
        # int_{-1}^{1} x^4 dx = 2/5
        assert lp_norm(lambda x: x[:, 0] ** 2, D, 2.0) == pytest.approx(math.sqrt(0.4), rel=1e-12)

    def test_box(self):
        assert lp_norm(lambda x: np.ones(x.shape[0]), Box((0.0, 0.0), (2.0, 3.0)), 1.0) == pytest.approx(6.0)

    def test_disc_area(self):
        assert lp_norm(lambda x: np.ones(x.shape[0]), Ball((0.0, 0.0), 1.0), 1.0) == pytest.approx(math.pi, rel=1e-2)

    def test_space_time(self):
        val = lp_norm(lambda t, x: np.full(x.shape[0], t), D, 1.0, time_interval=(0.0, 2.0))
        assert val == pytest.approx(4.0, rel=1e-12)

    def test_p_below_one(self):
        with pytest.raises(ArgumentError):
            lp_norm(lambda x: np.ones(x.shape[0]), D, 0.5)

    @settings(max_examples=25, deadline=None)
    @given(c=st.floats(0.1, 10), p=st.floats(1, 6))
    def test_homogeneous(self, c, p):
        f = lambda x: np.cos(x[:, 0]) + 2  # noqa: E731
        assert lp_norm(lambda x: c * f(x), D, p) == pytest.approx(c * lp_norm(f, D, p), rel=1e-10)


class TestAbp:
    def test_elliptic_holds(self):
        rep = abp_bound(bs.stable(1.0), D, None, SourceTerm.constant(1.0, 2.0), cfg=cfg(4000, seed=2), n_grid=5)
        assert rep.passed
        assert rep.lhs == pytest.approx(1.0, rel=0.05)
        assert rep.constants["sup_tau"] >= rep.lhs - 3 * rep.lhs_stderr

    def test_homogeneous_in_source(self):
        kw = dict(cfg=cfg(2000, seed=2), n_grid=3, sup_tau=0.55, heat=HEAT)
        a = abp_bound(bs.linear(), D, 1.0, SourceTerm.constant(1.0, 2.0), **kw)
        b = abp_bound(bs.linear(), D, 1.0, SourceTerm.constant(10.0, 2.0), **kw)
        assert b.rhs == pytest.approx(10 * a.rhs, rel=1e-12)
        assert b.lhs == pytest.approx(10 * a.lhs, rel=1e-12)

    def test_rhs_segments_add_up(self):
        rhs, c = elliptic_abp_rhs(bs.stable(1.0), 1, 2.0, 1.0, 1.0, HEAT)
        assert rhs == pytest.approx(c["first_segment"] + c["tail_segment"])
        assert c["k"] > c["p_conj"]

    def test_critical_exponent_rejected(self):
        # d / (2 mu_low) = 1 for the Cauchy exponent on the line
        with pytest.raises(ArgumentError):
            elliptic_abp_rhs(bs.stable(1.0), 1, 1.0, 1.0, 1.0, HEAT)
        with pytest.raises(ArgumentError):
            abp_bound(bs.stable(1.0), D, None, SourceTerm.constant(1.0, 1.0), cfg=cfg(100))

    def test_negative_potential(self):
        with pytest.raises(UnsupportedError):
            abp_bound(bs.linear(), D, -1.0, SourceTerm.constant(1.0, 2.0), cfg=cfg(100), sup_tau=0.5, heat=HEAT)

    def test_parabolic_holds(self):
        rep = parabolic_abp_bound(bs.stable(1.0), D, None, SourceTerm.constant(1.0, 3.0), 1.0,
                                  cfg=cfg(2000, seed=2), n_grid=3, sup_tau=1.05, heat=HEAT)
        assert rep.passed
        assert rep.kind == "parabolic"
        assert rep.constants["T"] == 1.0

    def test_parabolic_exponent(self):
        with pytest.raises(ArgumentError):
            parabolic_abp_rhs(bs.stable(1.0), 1, 2.0, 1.0, 1.0, HEAT)

    def test_refined(self):
        rep = refined_abp_check(1.0, D, lambda x: np.ones_like(x))
        assert rep.passed
        assert rep.ratio_max_min > 1
        assert rep.sup_expectation < getoor_mean_exit(1.0, 1, 1.0, 0.0)

    def test_refined_brownian_torsion(self):
        rep = refined_abp_check(2.0, D, lambda x: np.zeros_like(x), margin=0.5)
        # (A u = 1) on the grid is the exact torsion (1 - x^2)/2 at the nodes
        assert rep.sup_expectation == pytest.approx(0.5, rel=1e-4)
        assert rep.passed
