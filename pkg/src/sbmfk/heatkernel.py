"""Transition density of X_t = B_{S_t} by radial Fourier inversion.

For a radial characteristic function exp(-t Psi(|xi|^2)) in R^d,

    q_t(r) = (2 pi)^{-d/2} r^{-nu} int_0^inf exp(-t Psi(k^2)) k^{d/2} J_nu(k r) dk,  nu = d/2 - 1,

which for d = 1 and d = 3 reduces to cosine and sine transforms.  The
k-integral is truncated where the integrand envelope drops below 1e-17 of its
scale and summed over panels between the approximate zeros of the Bessel
factor, each panel by Gauss-Legendre with an embedded lower-order estimate as
the error bound.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from . import bernstein as bs
from .bernstein import BernsteinSpec, Kind
from .errors import ArgumentError, NumericError, UnsupportedError

__all__ = [
    "density", "gradient", "density_at_origin", "total_mass", "radial_moment", "BoundReport",
    "diagonal_constants", "diagonal_bound", "LiouvilleBounds", "liouville_bounds",
    "green_asymptotic", "write_table", "scaled_spec_psi",
]

DENSITY_ATOL = 1e-8
_GL_HI = np.polynomial.legendre.leggauss(40)
_GL_LO = np.polynomial.legendre.leggauss(20)


def _psi_vector(spec: BernsteinSpec):
    """Vectorized Psi.  Tabulated specs go through a cached log-log interpolant of Psi."""
    if spec.kind is not Kind.CUSTOM:
        return lambda u: bs.evaluate(spec, u)
    return _custom_psi_interp(spec)


@lru_cache(maxsize=32)
def _custom_psi_interp(spec: BernsteinSpec):
    lu = np.linspace(math.log(1e-14), math.log(1e14), 561)
    lp = np.log(np.array([bs.evaluate(spec, math.exp(v)) for v in lu]))
    s_lo = (lp[1] - lp[0]) / (lu[1] - lu[0])
    s_hi = (lp[-1] - lp[-2]) / (lu[-1] - lu[-2])

    def psi(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            lx = np.log(u)
        inner = np.interp(lx, lu, lp)
        val = np.where(lx < lu[0], lp[0] + s_lo * (lx - lu[0]), np.where(lx > lu[-1], lp[-1] + s_hi * (lx - lu[-1]), inner))
        return np.where(u == 0, 0.0, np.exp(val))

    return psi


def scaled_spec_psi(spec: BernsteinSpec, rho: float):
    """Psi_rho(u) = Psi(u / rho^2), the exponent of X / rho."""
    psi = _psi_vector(spec)
    return lambda u: psi(np.asarray(u, dtype=float) / rho ** 2)


def _cutoff(psi, t: float, power: float) -> float:
    """k beyond which exp(-t Psi(k^2)) k^power is below 1e-17 relative to its scale."""
    k = 1.0
    # the scale: a point where tPsi(k^2) ~ 1
    for _ in range(400):
        if t * float(psi(k * k)) >= 1.0:
            break
        k *= 2.0
    else:
        raise NumericError("exponent too flat to truncate the Fourier integral", residual=math.inf)
    scale = k
    for _ in range(400):
        if t * float(psi(k * k)) - power * math.log(k / scale + 1.0) > 40.0:
            return k
        k *= 1.25
    raise NumericError("could not truncate the Fourier integral", residual=math.inf)


EXPLICIT_PANELS = 2000
_TAIL_PANELS = 240
_EULER_LEVELS = 40


def _head_edges(kmax: float, r: float, scale: float) -> np.ndarray:
    head_end = min(kmax, scale) if r == 0 else min(kmax, math.pi / r, scale)
    head = head_end * np.geomspace(1e-14, 1.0, 45)
    tail = np.geomspace(head_end, kmax, 60) if kmax > head_end else np.empty(0)
    return np.unique(np.concatenate([[0.0], head, tail]))


def _euler_sum(partial: np.ndarray) -> tuple[float, float]:
    """Limit of an alternating sequence of partial sums by repeated averaging."""
    s = partial.copy()
    prev = s[-1]
    for _ in range(_EULER_LEVELS):
        if s.size < 3:
            break
        prev = s[-1]
        s = (s[:-1] + s[1:]) / 2
    return float(s[-1]), float(abs(s[-1] - prev))


def _radial_integral(psi, t: float, d: int, r: float, power: float, order: float, bessel) -> tuple[float, float]:
    kmax = _cutoff(psi, t, power)
    scale = 1.0
    while t * float(psi(scale * scale)) < 1.0:
        scale *= 2.0
    fn = lambda k: np.exp(-t * psi(k * k)) * k ** power * bessel(k)  # noqa: E731
    n_zero = kmax * r / math.pi
    if n_zero <= EXPLICIT_PANELS:
        edges = _head_edges(kmax, r, scale)
        if r > 0:
            j = np.arange(1, int(n_zero + 2))
            with np.errstate(over="ignore"):  # subnormal r: zeros beyond kmax are dropped anyway
                zeros = (j + order / 2 - 0.25) * math.pi / r
            edges = np.unique(np.concatenate([edges, zeros[zeros < kmax]]))
        return _panel_sum(fn, edges)
    # many oscillations: explicit head, then panels between consecutive zeros summed
    # as an alternating series
    zeros = (np.arange(1, _TAIL_PANELS + 2) + order / 2 - 0.25) * math.pi / r
    head = zeros[0] * np.geomspace(1e-14, 1.0, 45)
    head_val, head_err = _panel_sum(fn, np.concatenate([[0.0], head]))
    vals = _panel_values(fn, zeros)
    partial = head_val + np.cumsum(vals)
    acc, acc_err = _euler_sum(partial[-60:])
    return acc, head_err + acc_err


def _panel_sum(fn, edges: np.ndarray) -> tuple[float, float]:
    a, b = edges[:-1], edges[1:]
    mid, half = (a + b) / 2, (b - a) / 2

    def rule(gl):
        x, w = gl
        k = mid[:, None] + half[:, None] * x[None, :]
        return np.sum(half * (fn(k) @ w))

    hi = rule(_GL_HI)
    return float(hi), float(abs(hi - rule(_GL_LO)))


def _panel_values(fn, edges: np.ndarray) -> np.ndarray:
    a, b = edges[:-1], edges[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    x, w = _GL_HI
    k = mid[:, None] + half[:, None] * x[None, :]
    return half * (fn(k) @ w)


def _check_args(t: float, d: int, r: float) -> None:
    if not (t > 0):
        raise ArgumentError("t must be positive")
    if int(d) != d or d < 1:
        raise ArgumentError("dimension must be a positive integer")
    if r < 0:
        raise ArgumentError("radius must be non-negative")


@lru_cache(maxsize=64)
def _hw_ok(spec: BernsteinSpec) -> bool:
    if spec.kind in (Kind.LINEAR, Kind.STABLE, Kind.RELATIVISTIC, Kind.STABLE_SUM, Kind.LOG_DAMPED, Kind.LOG_BOOSTED):
        return True
    return bs.hartman_wintner_diagnostic(spec, [1e2, 1e4, 1e6, 1e8]).diverging


def _density_psi(psi, t: float, d: int, r: float) -> tuple[float, float]:
    if r == 0:
        val, err = _radial_integral(psi, t, d, 0.0, d - 1, 0.0, lambda k: 1.0)
        const = 2 * math.pi ** (d / 2) / math.gamma(d / 2) / (2 * math.pi) ** d
        return const * val, const * err
    if d == 1:
        val, err = _radial_integral(psi, t, d, r, 0.0, 0.5, lambda k: np.cos(k * r))
        return val / math.pi, err / math.pi
    if d == 3:
        val, err = _radial_integral(psi, t, d, r, 1.0, 1.5, lambda k: np.sin(k * r))
        c = 1 / (2 * math.pi ** 2 * r)
        return c * val, c * err
    nu = d / 2 - 1
    val, err = _radial_integral(psi, t, d, r, d / 2, nu, lambda k: special.jv(nu, k * r))
    c = (2 * math.pi) ** (-d / 2) * r ** (-nu)
    return c * val, c * err


def density(spec: BernsteinSpec, t: float, d: int, r: float, atol: float = DENSITY_ATOL) -> float:
    """q_t(x) for |x| = r."""
    _check_args(t, d, r)
    if not _hw_ok(spec):
        raise NumericError("Psi(u^2)/log u does not diverge; no bounded density", residual=math.inf)
    val, err = _density_psi(_psi_vector(spec), t, int(d), float(r))
    if err > atol:
        raise NumericError(f"density quadrature error {err:.3g} above {atol:g}", residual=err)
    return max(val, 0.0) if val > -atol else val


def density_at_origin(spec: BernsteinSpec, t: float, d: int) -> float:
    return density(spec, t, d, 0.0)


def _gradient_psi(psi, t: float, d: int, r: float) -> tuple[float, float]:
    if r == 0:
        return 0.0, 0.0
    if d == 1:
        val, err = _radial_integral(psi, t, d, r, 1.0, 1.5, lambda k: np.sin(k * r))
        return -val / math.pi, err / math.pi
    nu = d / 2 - 1
    val, err = _radial_integral(psi, t, d, r, d / 2 + 1, nu + 1, lambda k: special.jv(nu + 1, k * r))
    c = (2 * math.pi) ** (-d / 2) * r ** (-nu)
    return -c * val, c * err


def gradient(spec: BernsteinSpec, t: float, d: int, r: float, atol: float = DENSITY_ATOL) -> float:
    """Radial derivative dq_t/dr at |x| = r (non-positive for a radially decreasing kernel)."""
    _check_args(t, d, r)
    val, err = _gradient_psi(_psi_vector(spec), t, int(d), float(r))
    if err > atol:
        raise NumericError(f"gradient quadrature error {err:.3g} above {atol:g}", residual=err)
    return val


# ---------------------------------------------------------------- radial integrals


def _sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def _radial_profile_integral(qfun, d: int, weight, r_max: float, slope_r: float | None = None):
    """int_{R^d} q(|y|) w(|y|) dy on [0, r_max] plus a power-law tail fitted at r_max."""
    area = _sphere_area(d)
    edges = np.concatenate([[0.0], np.geomspace(1e-6, r_max, 120)])
    total = 0.0
    x, w = _GL_LO
    for a, b in zip(edges[:-1], edges[1:]):
        rr = (a + b) / 2 + (b - a) / 2 * x
        vals = np.array([qfun(v) for v in rr]) * weight(rr) * rr ** (d - 1)
        total += (b - a) / 2 * float(vals @ w)
    q1, q0 = qfun(r_max), qfun(r_max / 1.1)
    tail = 0.0
    if q1 > 0 and q0 > 0:
        s = math.log(q1 / q0) / math.log(1.1)
        if s + d >= 0:
            raise NumericError("density tail is not integrable at the fitted slope", residual=s)
        tf = lambda rr: q1 * (rr / r_max) ** s * weight(np.asarray(rr)) * rr ** (d - 1)  # noqa: E731
        tail, _ = integrate.quad(tf, r_max, np.inf, limit=200)
    return area * total, area * tail


def total_mass(spec: BernsteinSpec, t: float, d: int, r_max: float | None = None) -> float:
    """int q_t(y) dy; should equal 1."""
    r_max = _default_rmax(spec, t) if r_max is None else r_max
    body, tail = _radial_profile_integral(lambda r: density(spec, t, d, r, atol=1e-7), d,
                                          lambda r: np.ones_like(r), r_max)
    return body + tail


def radial_moment(spec: BernsteinSpec, t: float, d: int, delta: float, r_max: float | None = None,
                  psi=None) -> float:
    """int q_t(y) (1 + |y|)^delta dy with a power-law tail beyond ``r_max``."""
    psi = _psi_vector(spec) if psi is None else psi
    r_max = _default_rmax_psi(psi, t) if r_max is None else r_max
    q = lambda r: max(_density_psi(psi, t, d, r)[0], 1e-300)  # noqa: E731
    body, tail = _radial_profile_integral(q, d, lambda r: (1 + r) ** delta, r_max)
    return body + tail


def _default_rmax_psi(psi, t: float) -> float:
    # length scale: r with t Psi(r^-2) = 1
    r = 1.0
    while t * float(psi(r ** -2)) > 1.0:
        r *= 2
    while t * float(psi(r ** -2)) < 1.0 and r > 1e-6:
        r /= 2
    return 1e4 * r


def _default_rmax(spec: BernsteinSpec, t: float) -> float:
    return _default_rmax_psi(_psi_vector(spec), t)


# ---------------------------------------------------------------- on-diagonal bound


@dataclass(frozen=True)
class BoundReport:
    kappa1_fit: float
    kappa1_refined: float
    kappa2: float
    kappa3: float
    theta_tilde: float
    exponent: float
    products: tuple[float, ...]
    t_grid: tuple[float, ...]
    passed: bool

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def diagonal_constants(spec: BernsteinSpec) -> tuple[float, float, float]:
    """(theta_tilde, kappa3, kappa2) of the on-diagonal bound q_t(0) <= kappa1 t^{-d/(2 mu)}, t <= kappa2."""
    sc = spec.scaling
    theta = max(sc.theta_low, 1.0)
    psi_theta = bs.evaluate(spec, theta)
    kappa3 = sc.c_low * psi_theta
    kappa2 = min(1.0 / kappa3, 1.0 / (2 * math.pi ** 2 * psi_theta))
    return theta, kappa3, kappa2


def diagonal_bound(spec: BernsteinSpec, d: int, t_grid=None, x_grid=None, n_t: int = 12) -> BoundReport:
    """Fit kappa1 = sup q_t(x) t^{d/(2 mu_low)} over t in (0, kappa2] and check it is stable.

    Stability: refining the t grid (twice the points, one decade further
    down) must not raise the fit by more than a factor of 2.
    """
    theta, kappa3, kappa2 = diagonal_constants(spec)
    mu = spec.scaling.mu_low
    expo = d / (2 * mu)
    x_grid = [0.0] if x_grid is None else list(x_grid)

    def fit(ts):
        prods = []
        for t in ts:
            q = max(density(spec, float(t), d, float(abs(x)), atol=1e-6 * max(1.0, t ** -expo)) for x in x_grid)
            prods.append(q * t ** expo)
        return prods

    if t_grid is None:
        t_grid = kappa2 * np.geomspace(1e-3, 1.0, n_t)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(t_grid > kappa2 * (1 + 1e-12)):
        raise ArgumentError("t_grid must lie in (0, kappa2]")
    prods = fit(t_grid)
    fine = np.geomspace(t_grid.min() / 10, t_grid.max(), 2 * len(t_grid))
    k_ref = max(fit(fine))
    k_fit = max(prods)
    ok = bool(np.isfinite(k_fit) and np.isfinite(k_ref) and k_ref <= 2 * k_fit)
    return BoundReport(k_fit, k_ref, kappa2, kappa3, theta, expo, tuple(prods),
                       tuple(t_grid.tolist()), ok)


# ---------------------------------------------------------------- Liouville ingredients


@dataclass(frozen=True)
class LiouvilleBounds:
    rho: tuple[float, ...]
    t_rho: tuple[float, ...]
    grad_sup: tuple[float, ...]
    moment: tuple[float, ...]
    delta: float
    bounded: bool

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _grad_sup(psi, t: float, d: int) -> float:
    r0 = _default_rmax_psi(psi, t) / 40.0
    grid = r0 * np.geomspace(1e-2, 20.0, 60)
    vals = [abs(_gradient_psi(psi, t, d, float(r))[0]) for r in grid]
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    fine = np.linspace(lo, hi, 41)
    return max(max(vals), max(abs(_gradient_psi(psi, t, d, float(r))[0]) for r in fine))


def liouville_bounds(spec: BernsteinSpec, rhos, delta: float, d: int, growth: float = 2.0) -> LiouvilleBounds:
    """sup |grad q^rho_t| and int q^rho_t (1+|y|)^delta at t = 1 / Psi(rho^-2), per rho.

    ``bounded`` holds when neither sequence grows by more than ``growth``
    over its first value along ``rhos``.
    """
    sc = spec.scaling
    if not (0 < delta < 2 * sc.mu_low):
        raise ArgumentError(f"delta must lie in (0, {2 * sc.mu_low:g}); the moment diverges otherwise")
    if sc.theta_low != 0:
        raise ArgumentError("requires the lower scaling to hold on the whole half-line (theta_low = 0)")
    rhos = [float(r) for r in rhos]
    if not rhos or min(rhos) < 1:
        raise ArgumentError("rho values must be >= 1")
    ts, grads, moms = [], [], []
    for rho in rhos:
        psi = scaled_spec_psi(spec, rho)
        t = 1.0 / float(psi(1.0))
        ts.append(t)
        grads.append(_grad_sup(psi, t, d))
        moms.append(radial_moment(spec, t, d, delta, psi=psi))
    ok = bool(all(np.isfinite(grads)) and all(np.isfinite(moms))
              and max(grads) <= growth * grads[0] and max(moms) <= growth * moms[0])
    return LiouvilleBounds(tuple(rhos), tuple(ts), tuple(grads), tuple(moms), float(delta), ok)


def green_asymptotic(spec: BernsteinSpec, r: float, d: int) -> float:
    """Comparison quantity 1 / (r^d Psi(r^-2)) for the Green function at distance r."""
    from .principles import recurrence_classify

    if not (r > 0):
        raise ArgumentError("r must be positive")
    rec = recurrence_classify(spec, d).recurrent
    if rec is not False:
        why = "recurrent" if rec else "not classified as transient"
        raise UnsupportedError(f"the process is {why}; no Green function comparison")
    return 1.0 / (r ** d * bs.evaluate(spec, r ** -2))


def write_table(spec: BernsteinSpec, d: int, t_grid, r_grid, path) -> list[tuple[float, float, float]]:
    """Write (t, r, q) rows to CSV and return them."""
    rows = [(float(t), float(r), density(spec, float(t), d, float(r))) for t in t_grid for r in r_grid]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["t", "r", "q"])
        for row in rows:
            w.writerow([repr(v) for v in row])
    return rows
