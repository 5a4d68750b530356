from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbmfk import bernstein as bs
from sbmfk.config import SolverConfig
from sbmfk.errors import ArgumentError, SingularError, UnsupportedError
from sbmfk.principles import (
    NARROW_THETA, antimax_scan, candidate_check, classify, harmonic_flatness, lane_emden_value, liouville_checks,
    maxprinciple_scan, narrow_domain_check, recurrence_classify, semilinear_range,
)
from sbmfk.sbm import Annulus, Interval
from sbmfk.spectral import GridOperator

from oracles import galerkin_eigenvalue, lane_emden_exponent

D = Interval(-1.0, 1.0)
ONE = lambda x: np.ones_like(x)  # noqa: E731


class TestMaxPrinciple:
    def test_positive_below_lambda_star(self):
        scan = maxprinciple_scan(1.0, D, None, ONE, [-5.0, 0.0, 0.5, 1.0, 1.15, 2.0])
        assert scan.verdict.passed
        below = [s for lam, s in zip(scan.lambdas, scan.signs) if lam < scan.lambda_star]
        assert below == ["positive"] * 5
        assert scan.signs[-1] != "positive"
        assert scan.lambda_star == pytest.approx(galerkin_eigenvalue(1.0), rel=5e-3)

    def test_with_potential(self):
        scan = maxprinciple_scan(1.5, D, lambda x: 3 * x * x, ONE, np.linspace(0, 2.5, 6))
        assert scan.verdict.passed

    def test_near_eigenvalue(self):
        lam = GridOperator(1.0, -1.0, 1.0, 400).principal()[0]
        with pytest.raises(SingularError):
            maxprinciple_scan(1.0, D, None, ONE, [lam + 1e-9])

    def test_source_must_be_nonnegative(self):
        with pytest.raises(ArgumentError):
            maxprinciple_scan(1.0, D, None, lambda x: -ONE(x), [0.0])

    def test_negative_eigenvector_candidate(self):
        op = GridOperator(1.0, -1.0, 1.0, 400)
        lam, vec = op.principal()
        nodes = op.nodes
        neg = lambda x: -np.interp(x, nodes, vec)  # noqa: E731
        below = candidate_check(1.0, D, None, neg, lam - 0.5)
        assert not below.is_supersolution and not below.counterexample
        above = candidate_check(1.0, D, None, neg, lam + 0.5)
        assert above.is_supersolution and above.min_value < 0

    def test_positive_candidate_is_not_a_counterexample(self):
        assert not candidate_check(1.0, D, None, ONE, 0.0).counterexample


class TestAntimax:
    def test_small_delta_negative(self):
        rep = antimax_scan(1.0, D, None, ONE, [1e-3, 1e-2, 0.1])
        assert all(rep.full) and all(rep.weak)
        assert rep.verified_full == 0.1

    def test_large_delta_fails(self):
        second = GridOperator(1.0, -1.0, 1.0, 400).eigenvalues(2)
        gap = float(second[1] - second[0])
        rep = antimax_scan(1.0, D, None, ONE, [0.01, gap + 1.0])
        assert rep.full == (True, False)
        assert rep.verified_full == 0.01

    def test_midpoint_blows_up_like_inverse_delta(self):
        rep = antimax_scan(1.5, D, None, ONE, [1e-5, 1e-4])
        scaled = [d * m for d, m in zip(rep.deltas, rep.midpoint)]
        assert scaled[0] == pytest.approx(scaled[1], rel=1e-3)
        assert scaled[0] < 0

    def test_nonpositive_delta(self):
        with pytest.raises(ArgumentError):
            antimax_scan(1.0, D, None, ONE, [0.0, 0.1])


class TestNarrow:
    def test_theta(self):
        assert NARROW_THETA == 0.083

    def test_gate_fails_on_wide_interval(self):
        v = narrow_domain_check(bs.linear(), D, lambda x: np.full(np.asarray(x).shape[0], -5.0),
                                SolverConfig(n_paths=500))
        assert not v.passed
        assert v.detail["note"] == "gate not satisfied; no assertion made"
        assert v.witnesses[0]["gate_lhs"] == 5.0

    def test_narrow_interval_holds(self):
        v = narrow_domain_check(bs.linear(), Interval(-0.1, 0.1), lambda x: np.full(np.asarray(x).shape[0], -5.0),
                                SolverConfig(n_paths=4000, seed=3))
        assert v.passed
        assert v.detail["gate"]
        assert all(p < 0 for p in v.detail["phi"])
        assert v.detail["maximum_principle_exact"]

    def test_stable_gate_uses_exponent(self):
        v = narrow_domain_check(bs.stable(1.0), Interval(-0.01, 0.01), lambda x: np.full(np.asarray(x).shape[0], -5.0),
                                SolverConfig(n_paths=2000, seed=3))
        assert v.detail["gate_rhs"] == pytest.approx(NARROW_THETA * 100)
        assert v.passed

    def test_nonconvex(self):
        with pytest.raises(UnsupportedError):
            narrow_domain_check(bs.linear(), Annulus((0.0, 0.0), 0.5, 1.0), lambda x: np.zeros(len(x)))


class TestClassify:
    @pytest.mark.parametrize("spec,d,expected", [
        (bs.stable(1.5), 1, True), (bs.stable(1.0), 1, True), (bs.linear(), 2, True), (bs.linear(), 1, True),
        (bs.relativistic(1.0, 1.0), 1, True), (bs.relativistic(1.0, 1.0), 2, True),
        (bs.stable(0.5), 1, False), (bs.stable(1.5), 2, False), (bs.stable(1.0), 3, False),
    ])
    def test_chung_fuchs(self, spec, d, expected):
        assert recurrence_classify(spec, d).recurrent is expected

    def test_transient_range(self):
        c = classify(bs.stable(0.5), 1)
        assert c.recurrent is False
        assert c.semilinear_range == ("1", "2")
        assert classify(bs.stable(1.0), 3).semilinear_range == ("1", "3/2")

    def test_recurrent_has_no_range(self):
        assert classify(bs.stable(1.5), 1).semilinear_range is None

    def test_range_needs_transience(self):
        assert semilinear_range(1, Fraction(1, 2)) is None
        assert semilinear_range(2, Fraction(1, 4)) == (1, Fraction(4, 3))

    @pytest.mark.parametrize("args", [
        (2, 2, 1, 1), (3, 2, Fraction(1, 2), Fraction(3, 4)), ("1.5", 3, "0.25", 1), (5, 1, 1, Fraction(1, 3)),
        (2, 3, "0.5", "0.5"),
    ])
    def test_lane_emden(self, args):
        assert lane_emden_value(*args) == lane_emden_exponent(*args)

    def test_lane_emden_verdict(self):
        c = classify(bs.stable(1.0), 1, lane_emden=(2, 2, "0.5", "0.5"))
        assert c.lane_emden == {"value": "2", "nonexistence": True}

    def test_lane_emden_needs_pq_above_one(self):
        with pytest.raises(ArgumentError):
            lane_emden_value(1, 1, 1, 1)

    @settings(max_examples=40)
    @given(p=st.fractions(Fraction(11, 10), 5), q=st.fractions(Fraction(11, 10), 5),
           m1=st.fractions(Fraction(1, 10), 1), m2=st.fractions(Fraction(1, 10), 1))
    def test_lane_emden_matches_oracle(self, p, q, m1, m2):
        assert lane_emden_value(p, q, m1, m2) == lane_emden_exponent(p, q, m1, m2)


class TestLiouville:
    def test_constant_data_is_flat(self):
        out = harmonic_flatness(bs.stable(1.0), 1, lambda y: np.full(y.shape[0], 3.0),
                                cfg=SolverConfig(n_paths=500))
        assert out["oscillation"] == [0.0, 0.0, 0.0]

    def test_recurrent_skips_hitting(self):
        rep = liouville_checks(bs.stable(1.5), 1, cfg=SolverConfig(n_paths=1000, seed=2))
        assert rep.hitting is None and rep.doubling is None
        assert rep.notices
        assert rep.kernel["bounded"]

    def test_requires_zero_theta(self):
        with pytest.raises(ArgumentError):
            liouville_checks(bs.with_scaling(bs.stable(1.0), theta_low=1.0), 1)
