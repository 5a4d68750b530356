import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from sbmfk import bernstein as bs
from sbmfk import heatkernel as hk
from sbmfk.errors import ArgumentError, UnsupportedError

from oracles import cauchy_kernel, gaussian_kernel


class TestDensity:
    @pytest.mark.parametrize("d", [1, 2, 3])
    @pytest.mark.parametrize("t,r", [(0.1, 0.0), (1.0, 0.5), (1.0, 2.0), (3.0, 4.0)])
    def test_gaussian(self, d, t, r):
        assert hk.density(bs.linear(), t, d, r) == pytest.approx(gaussian_kernel(t, d, r), rel=1e-10, abs=1e-14)

    @pytest.mark.parametrize("d", [1, 2, 3])
    @pytest.mark.parametrize("t,r", [(0.1, 0.0), (1.0, 1.0), (0.5, 3.0), (1.0, 100.0)])
    def test_cauchy(self, d, t, r):
        assert hk.density(bs.stable(1.0), t, d, r) == pytest.approx(cauchy_kernel(t, d, r), rel=1e-9)

    def test_named_values(self):
        assert hk.density(bs.linear(), 1.0, 1, 0.0) == pytest.approx((4 * math.pi) ** -0.5, rel=1e-12)
        assert hk.density(bs.stable(1.0), 1.0, 1, 0.0) == pytest.approx(1 / math.pi, rel=1e-12)
        assert hk.density(bs.stable(1.0), 1.0, 1, 1.0) == pytest.approx(1 / (2 * math.pi), rel=1e-12)

    def test_gradient_of_cauchy(self):
        # d/dr t / (pi (t^2 + r^2)) at t = r = 1
        assert hk.gradient(bs.stable(1.0), 1.0, 1, 1.0) == pytest.approx(-1 / (2 * math.pi), rel=1e-8)

    @pytest.mark.parametrize("spec", [bs.stable(0.5), bs.stable(1.5), bs.relativistic(1.0, 1.0),
                                      bs.stable_sum(1.0, 1.5), bs.log_damped(1.5, 0.5)])
    def test_total_mass(self, spec):
        assert hk.total_mass(spec, 1.0, 1) == pytest.approx(1.0, abs=1e-3)

    @settings(max_examples=10, deadline=None)
    @given(alpha=st.sampled_from([0.5, 1.0, 1.5]), t=st.floats(0.05, 5.0), r=st.floats(0.0, 5.0))
    def test_stable_scaling(self, alpha, t, r):
        # q_t(r) = t^{-1/alpha} q_1(r t^{-1/alpha}) in d = 1
        spec = bs.stable(alpha)
        lhs = hk.density(spec, t, 1, r)
        rhs = t ** (-1 / alpha) * hk.density(spec, 1.0, 1, r * t ** (-1 / alpha))
        assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-10)

    @settings(max_examples=10, deadline=None)
    @given(alpha=st.sampled_from([0.5, 1.0, 1.5]), r1=st.floats(0.0, 3.0), dr=st.floats(0.01, 3.0))
    def test_radially_decreasing(self, alpha, r1, dr):
        spec = bs.stable(alpha)
        assert hk.density(spec, 1.0, 2, r1 + dr) < hk.density(spec, 1.0, 2, r1)

    @pytest.mark.parametrize("args", [(0.0, 1, 0.0), (1.0, 0, 0.0), (1.0, 1, -1.0)])
    def test_bad_arguments(self, args):
        with pytest.raises(ArgumentError):
            hk.density(bs.stable(1.0), *args)

    def test_table(self, tmp_path):
        rows = hk.write_table(bs.stable(1.0), 1, [1.0], [0.0, 1.0], tmp_path / "k.csv")
        assert rows[1][2] == pytest.approx(1 / (2 * math.pi))
        assert (tmp_path / "k.csv").read_text().startswith("t,r,q")


class TestOnDiagonalBound:
    def test_cauchy_product_is_constant(self):
        rep = hk.diagonal_bound(bs.stable(1.0), 1)
        assert rep.passed
        assert rep.exponent == 1.0
        assert np.allclose(rep.products, 1 / math.pi, rtol=1e-9)

    def test_gaussian_product_is_constant(self):
        rep = hk.diagonal_bound(bs.linear(), 1)
        assert np.allclose(rep.products, (4 * math.pi) ** -0.5, rtol=1e-9)

    @pytest.mark.parametrize("spec", [bs.stable(0.5), bs.relativistic(1.0, 1.0), bs.stable_sum(1.0, 0.5),
                                      bs.with_scaling(bs.stable(1.0), theta_low=4.0, c_low=0.5)])
    def test_kappa2_is_a_minimum(self, spec):
        theta, kappa3, kappa2 = hk.diagonal_constants(spec)
        assert theta >= 1
        assert kappa2 <= 1 / (2 * math.pi ** 2 * bs.evaluate(spec, theta)) + 1e-15
        assert kappa2 <= 1 / kappa3 + 1e-15

    def test_grid_outside_range(self):
        with pytest.raises(ArgumentError):
            hk.diagonal_bound(bs.stable(1.0), 1, t_grid=[1.0])


class TestLiouvilleBounds:
    def test_cauchy_is_rho_independent(self):
        rep = hk.liouville_bounds(bs.stable(1.0), [1, 2, 4, 8], 0.5, 1)
        assert rep.bounded
        assert np.ptp(rep.grad_sup) / rep.grad_sup[0] < 1e-6
        assert np.ptp(rep.moment) / rep.moment[0] < 1e-6

    def test_gaussian_moment(self):
        ref, _ = integrate.quad(lambda y: 2 * gaussian_kernel(1.0, 1, y) * (1 + y) ** 0.5, 0, np.inf)
        rep = hk.liouville_bounds(bs.linear(), [1], 0.5, 1)
        assert rep.moment[0] == pytest.approx(ref, rel=1e-6)

    def test_delta_at_the_limit(self):
        with pytest.raises(ArgumentError):
            hk.liouville_bounds(bs.stable(1.0), [1, 2], 1.0, 1)

    def test_needs_global_scaling(self):
        with pytest.raises(ArgumentError):
            hk.liouville_bounds(bs.with_scaling(bs.stable(1.0), theta_low=1.0), [1, 2], 0.5, 1)


class TestGreen:
    def test_values(self):
        assert hk.green_asymptotic(bs.stable(0.5), 2.0, 1) == pytest.approx(2 ** -0.5)
        assert hk.green_asymptotic(bs.stable(1.0), 1.0, 3) == pytest.approx(1.0)

    def test_recurrent(self):
        with pytest.raises(UnsupportedError):
            hk.green_asymptotic(bs.stable(1.5), 1.0, 1)
