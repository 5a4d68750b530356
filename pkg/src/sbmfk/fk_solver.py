"""Feynman-Kac Monte Carlo for Dirichlet exterior problems and the ABP verifiers.

The elliptic solution with zero exterior data is

    phi(x) = E^x[ int_0^tau exp(-int_0^s V(X_r) dr) f(X_s) ds ],

and the parabolic one adds the terminal term at time T.  Both integrals use
the left-endpoint rule on the path grid.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import bernstein as bs
from . import heatkernel as hk
from .bernstein import BernsteinSpec
from .config import SolverConfig
from .errors import ArgumentError, UnsupportedError
from .estimate import McEstimate
from .sbm import Box, Domain, Interval, Stop, moment_chain, simulate

__all__ = [
    "Potential", "SourceTerm", "solve_dirichlet", "harmonic_extension", "ViolationReport", "check_subsolution",
    "solve_parabolic", "AbpReport", "abp_bound", "parabolic_abp_bound", "lp_norm", "refined_abp_check",
    "solution_table",
]

QUAD_POINTS = 129
CENSOR_LIMIT = 0.01


@dataclass(frozen=True)
class Potential:
    """Bounded potential.  ``fn(x)`` or, if ``time_dependent``, ``fn(t, x)`` with x of shape (n, d)."""

    fn: Callable
    sup: float
    nonneg: bool
    time_dependent: bool = False

    @classmethod
    def constant(cls, c: float, d: int = 1) -> "Potential":
        return cls(lambda x: np.full(np.asarray(x).shape[0], float(c)), abs(float(c)), c >= 0)

    @classmethod
    def zero(cls) -> "Potential":
        return cls.constant(0.0)

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        out = self.fn(t, x) if self.time_dependent else self.fn(x)
        return np.asarray(out, dtype=float).reshape(-1) * np.ones(x.shape[0])

    def shifted(self, c: float) -> "Potential":
        if self.time_dependent:
            return Potential(lambda t, x: self.fn(t, x) + c, self.sup + abs(c), self.nonneg and c >= 0, True)
        return Potential(lambda x: self.fn(x) + c, self.sup + abs(c), self.nonneg and c >= 0)


def _box_of(domain: Domain) -> tuple[np.ndarray, np.ndarray]:
    return domain.bounding_box()


def lp_norm(fn: Callable, domain: Domain, p: float, n: int = QUAD_POINTS, time_interval: tuple[float, float] | None = None,
            n_time: int = 33) -> float:
    """||f||_{p, D} by tensor Gauss-Legendre on the bounding box, masked to the domain.

    With ``time_interval`` the norm is over (t0, t1) x D and ``fn(t, x)``.
    """
    if not (p >= 1):
        raise ArgumentError("p must be >= 1")
    d = domain.dim
    if d > 3:
        raise UnsupportedError("tensor quadrature is capped at d <= 3")
    lo, hi = _box_of(domain)
    x, w = np.polynomial.legendre.leggauss(n)
    axes = [(lo[i] + hi[i]) / 2 + (hi[i] - lo[i]) / 2 * x for i in range(d)]
    wts = [(hi[i] - lo[i]) / 2 * w for i in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    wgt = np.ones(1)
    for wi in wts:
        wgt = np.outer(wgt, wi).ravel()
    mask = domain.contains(grid)
    pts, ww = grid[mask], wgt[mask]
    if time_interval is None:
        vals = np.abs(np.asarray(fn(pts), dtype=float) * np.ones(pts.shape[0]))
        return float((ww @ vals ** p) ** (1 / p))
    t0, t1 = time_interval
    tx, tw = np.polynomial.legendre.leggauss(n_time)
    tt = (t0 + t1) / 2 + (t1 - t0) / 2 * tx
    total = 0.0
    for ti, wi in zip(tt, (t1 - t0) / 2 * tw):
        vals = np.abs(np.asarray(fn(ti, pts), dtype=float) * np.ones(pts.shape[0]))
        total += wi * float(ww @ vals ** p)
    return total ** (1 / p)


@dataclass(frozen=True)
class SourceTerm:
    """Source f with integrability exponent ``p``; ``fn(x)`` or ``fn(t, x)``."""

    fn: Callable
    p: float = 2.0
    time_dependent: bool = False
    nonneg: bool | None = None

    @classmethod
    def constant(cls, c: float, p: float = 2.0) -> "SourceTerm":
        return cls(lambda x: np.full(np.asarray(x).shape[0], float(c)), p, nonneg=c >= 0)

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        out = self.fn(t, x) if self.time_dependent else self.fn(x)
        return np.asarray(out, dtype=float).reshape(-1) * np.ones(x.shape[0])

    def scaled(self, c: float) -> "SourceTerm":
        if self.time_dependent:
            return SourceTerm(lambda t, x: c * self.fn(t, x), self.p, True)
        return SourceTerm(lambda x: c * self.fn(x), self.p)

    def norm(self, domain: Domain, time_interval: tuple[float, float] | None = None) -> float:
        if self.time_dependent:
            if time_interval is None:
                raise ArgumentError("time-dependent source needs a time interval for its norm")
            return lp_norm(self.fn, domain, self.p, time_interval=time_interval)
        return lp_norm(self.fn, domain, self.p)

    def is_zero(self) -> bool:
        return getattr(self.fn, "_zero", False)


def _zero_fn(x):
    return np.zeros(np.asarray(x).shape[0])


_zero_fn._zero = True  # type: ignore[attr-defined]
ZERO_SOURCE = SourceTerm(_zero_fn)


def _as_potential(v) -> Potential | None:
    if v is None or isinstance(v, Potential):
        return v
    if isinstance(v, (int, float)):
        return Potential.constant(float(v))
    raise ArgumentError("potential must be a Potential, a number or None")


def _as_source(f) -> SourceTerm:
    if isinstance(f, SourceTerm):
        return f
    if isinstance(f, (int, float)):
        return ZERO_SOURCE if f == 0 else SourceTerm.constant(float(f))
    raise ArgumentError("source must be a SourceTerm or a number")


def _point(domain: Domain, x) -> np.ndarray | None:
    """Single query point; None if it lies outside the open domain."""
    xs = domain._pts(x)
    if xs.shape[0] != 1:
        raise ArgumentError("expected one query point")
    return xs[0] if domain.contains(xs)[0] else None


def _deterministic_zero(n: int, ci: float) -> McEstimate:
    return McEstimate(0.0, 0.0, n, ci, ("deterministic",))


def solve_dirichlet(spec, domain: Domain, potential, source, x, cfg: SolverConfig, stream: int = 0) -> McEstimate:
    """phi(x) for Psi(-Delta) phi + V phi = f in D, phi = 0 outside D."""
    pot = _as_potential(potential)
    src = _as_source(source)
    if pot is not None and not pot.nonneg:
        raise UnsupportedError("the solver requires V >= 0")
    xp = _point(domain, x)
    if xp is None or src.is_zero():
        return _deterministic_zero(cfg.n_paths, cfg.ci_level)
    b = simulate(spec, domain, xp, cfg, potential=pot, source=src, stream=stream)
    flags = ("censored>1%",) if b.fraction(Stop.CENSORED) > CENSOR_LIMIT else ()
    return McEstimate.from_samples(b.integral, cfg.ci_level, flags)


def harmonic_extension(spec, domain: Domain, g: Callable, x, cfg: SolverConfig, stream: int = 0) -> McEstimate:
    """E^x[g(X_tau)] for exterior data ``g`` evaluated on exit positions of shape (n, d)."""
    xs = domain._pts(x)
    if not domain.contains(xs)[0]:
        return McEstimate(float(np.asarray(g(xs), dtype=float).reshape(-1)[0]), 0.0, cfg.n_paths, cfg.ci_level,
                          ("deterministic",))
    b = simulate(spec, domain, xs[0], cfg, stream=stream)
    vals = np.asarray(g(b.position), dtype=float).reshape(-1) * np.ones(b.n)
    vals = np.where(b.reason == Stop.CENSORED, 0.0, vals)
    flags = ("censored>1%",) if b.fraction(Stop.CENSORED) > CENSOR_LIMIT else ()
    return McEstimate.from_samples(vals, cfg.ci_level, flags)


@dataclass(frozen=True)
class ViolationReport:
    points: np.ndarray
    phi: tuple[float, ...]
    rhs: tuple[McEstimate, ...]
    z_scores: tuple[float, ...]
    consistent: bool
    threshold: float = 4.0

    def witnesses(self) -> list[dict]:
        return [{"x": self.points[i].tolist(), "phi": self.phi[i], "rhs": self.rhs[i].mean, "z": self.z_scores[i]}
                for i in range(len(self.phi)) if self.z_scores[i] > self.threshold]


def check_subsolution(candidate: Callable, spec, domain: Domain, potential, source, test_points, t: float,
                      cfg: SolverConfig, threshold: float = 4.0, stream: int = 0) -> ViolationReport:
    """Test phi(x) <= E[e^{-int V} phi(X_{t ^ tau})] + E[int_0^{t ^ tau} e^{-int V} f] at each test point.

    ``candidate`` maps points (n, d) to values and must already include the
    exterior values.  z = (phi(x) - RHS) / stderr; violations have z > threshold.
    """
    if not (t > 0):
        raise ArgumentError("t must be positive")
    pot = _as_potential(potential)
    src = _as_source(source)
    pts = domain._pts(test_points)
    phis, rhss, zs = [], [], []
    for i, x in enumerate(pts):
        if not domain.contains(x[None, :])[0]:
            raise ArgumentError("test points must lie in the domain")
        b = simulate(spec, domain, x, cfg, horizon=t, potential=pot, source=None if src.is_zero() else src,
                     stream=stream + i)
        end = np.asarray(candidate(b.position), dtype=float).reshape(-1)
        vals = np.exp(-b.int_v) * end + b.integral
        est = McEstimate.from_samples(vals, cfg.ci_level)
        phi = float(np.asarray(candidate(x[None, :]), dtype=float).reshape(-1)[0])
        diff = phi - est.mean
        z = diff / est.stderr if est.stderr > 0 else (math.inf if diff > 1e-12 else 0.0)
        phis.append(phi)
        rhss.append(est)
        zs.append(float(z))
    return ViolationReport(pts, tuple(phis), tuple(rhss), tuple(zs), all(z <= threshold for z in zs), threshold)


def solve_parabolic(spec, domain: Domain, potential, source, terminal: Callable | None, T: float, t: float, x,
                    cfg: SolverConfig, stream: int = 0) -> McEstimate:
    """phi(t, x) for -d_t phi + Psi(-Delta) phi + V phi = f on [0, T) x D, phi(T) = terminal, phi = 0 outside D."""
    if t > T:
        raise ArgumentError("t must not exceed T")
    if t < 0:
        raise ArgumentError("t must be non-negative")
    pot = _as_potential(potential)
    src = _as_source(source)
    xp = _point(domain, x)
    if xp is None:
        return _deterministic_zero(cfg.n_paths, cfg.ci_level)
    term = (lambda y: np.zeros(np.asarray(y).shape[0])) if terminal is None else terminal
    if t == T:
        val = float(np.asarray(term(xp[None, :]), dtype=float).reshape(-1)[0])
        return McEstimate(val, 0.0, cfg.n_paths, cfg.ci_level, ("deterministic",))
    b = simulate(spec, domain, xp, cfg, horizon=T - t, t0=t, potential=pot,
                 source=None if src.is_zero() else src, stream=stream)
    end = np.where(b.reason == Stop.HORIZON, np.asarray(term(b.position), dtype=float).reshape(-1), 0.0)
    vals = np.exp(-b.int_v) * end + b.integral
    return McEstimate.from_samples(vals, cfg.ci_level)


def solution_table(spec, domain: Domain, potential, source, points, cfg: SolverConfig) -> list[tuple]:
    """(x..., mean, stderr) rows of the elliptic solution at ``points``."""
    rows = []
    for i, x in enumerate(np.atleast_2d(points)):
        est = solve_dirichlet(spec, domain, potential, source, x, cfg, stream=i)
        rows.append((*np.atleast_1d(x).tolist(), est.mean, est.stderr))
    return rows


# ============================================================== ABP


@dataclass(frozen=True)
class AbpReport:
    lhs: float
    lhs_stderr: float
    rhs: float
    constants: dict
    passed: bool
    kind: str = "elliptic"
    notes: tuple[str, ...] = field(default=(
        "kappa1 is fitted on a t-grid",
        "the moment constant is the sampled factorial bound k! (sup E tau)^k",
    ))

    def to_dict(self) -> dict:
        return asdict(self)


def _conjugate(p: float) -> float:
    return p / (p - 1)


def _heat_constants(spec: BernsteinSpec, d: int) -> tuple[float, float, float]:
    rep = hk.diagonal_bound(spec, d)
    kappa1 = max(rep.kappa1_fit, rep.kappa1_refined)
    q_k2 = hk.density(spec, rep.kappa2, d, 0.0, atol=1e-6)
    return kappa1, rep.kappa2, q_k2


def _lhs(spec, domain, pot, src, cfg, n_grid, stream) -> tuple[float, float, list]:
    pts = domain.line_grid(n_grid)
    ests = [solve_dirichlet(spec, domain, pot, src, x, cfg, stream=stream + i) for i, x in enumerate(pts)]
    i = int(np.argmax([e.mean for e in ests]))
    return max(ests[i].mean, 0.0), ests[i].stderr, [e.mean for e in ests]


def elliptic_abp_rhs(spec: BernsteinSpec, d: int, p: float, f_norm: float, sup_tau: float,
                     heat: tuple[float, float, float] | None = None) -> tuple[float, dict]:
    """Explicit right-hand side of the elliptic ABP bound with zero exterior data."""
    mu = spec.scaling.mu_low
    if not (p > d / (2 * mu)):
        raise ArgumentError(f"p must exceed d/(2 mu_low) = {d / (2 * mu):g}")
    kappa1, kappa2, q_k2 = _heat_constants(spec, d) if heat is None else heat
    pc = _conjugate(p)
    k = math.ceil(p / (p - 1)) + 1
    c_k = math.factorial(k) * sup_tau ** k
    first = (2 * mu * p / (2 * mu * p - d)) * kappa1 ** (1 / p) * kappa2 ** ((2 * mu * p - d) / (2 * mu * p)) * f_norm
    tail = q_k2 ** (1 / p) * f_norm * (pc / (k - pc)) * kappa2 ** ((pc - k) / pc) * c_k ** (1 / pc)
    consts = {"kappa1": kappa1, "kappa2": kappa2, "q_kappa2_0": q_k2, "mu_low": mu, "p": p, "p_conj": pc, "k": k,
              "sup_tau": sup_tau, "c_k": c_k, "f_norm": f_norm, "first_segment": first, "tail_segment": tail}
    return first + tail, consts


def abp_bound(spec: BernsteinSpec, domain: Domain, potential, source, p: float | None = None,
              cfg: SolverConfig | None = None, n_grid: int = 9, stream: int = 0, sup_tau: float | None = None,
              heat: tuple[float, float, float] | None = None) -> AbpReport:
    """Compare the sampled sup of the solution with the explicit ABP right-hand side."""
    cfg = SolverConfig() if cfg is None else cfg
    pot = _as_potential(potential)
    src = _as_source(source)
    p = src.p if p is None else float(p)
    d = domain.dim
    mu = spec.scaling.mu_low
    if not (p > d / (2 * mu)):
        raise ArgumentError(f"p must exceed d/(2 mu_low) = {d / (2 * mu):g}")
    if pot is not None and not pot.nonneg:
        raise UnsupportedError("the ABP bound requires V >= 0")
    if sup_tau is None:
        chain = moment_chain(spec, domain, ks=(1,), cfg=cfg, stream=stream + 1000)
        sup_tau = max(m.mean + m.z_crit * m.stderr for m in chain.mean_tau)
    f_norm = lp_norm(src.fn, domain, p)
    rhs, consts = elliptic_abp_rhs(spec, d, p, f_norm, sup_tau, heat)
    lhs, lhs_se, profile = _lhs(spec, domain, pot, src, cfg, n_grid, stream)
    consts["profile"] = profile
    return AbpReport(lhs, lhs_se, rhs, consts, bool(lhs <= rhs))


def parabolic_abp_rhs(spec: BernsteinSpec, d: int, p: float, f_norm: float, sup_tau: float,
                      heat: tuple[float, float, float] | None = None) -> tuple[float, dict]:
    """Explicit right-hand side of the parabolic ABP bound on Q_T with zero lateral and terminal data."""
    mu = spec.scaling.mu_low
    if not (p - 1 > d / (2 * mu)):
        raise ArgumentError(f"p - 1 must exceed d/(2 mu_low) = {d / (2 * mu):g}")
    kappa1, kappa2, q_k2 = _heat_constants(spec, d) if heat is None else heat
    pc = _conjugate(p)
    a = d / (2 * mu * (p - 1))
    first = kappa1 ** (1 / p) * (kappa2 ** (1 - a) / (1 - a)) ** (1 / pc) * f_norm
    second_moment = 2 * sup_tau ** 2
    second = q_k2 ** (1 / p) * f_norm * (second_moment / kappa2) ** (1 / pc)
    consts = {"kappa1": kappa1, "kappa2": kappa2, "q_kappa2_0": q_k2, "mu_low": mu, "p": p, "p_conj": pc,
              "exponent": a, "sup_tau": sup_tau, "second_moment_bound": second_moment, "f_norm": f_norm,
              "first_segment": first, "tail_segment": second}
    return first + second, consts


def parabolic_abp_bound(spec: BernsteinSpec, domain: Domain, potential, source: SourceTerm, T: float,
                        p: float | None = None, cfg: SolverConfig | None = None, times=None, n_grid: int = 7,
                        stream: int = 0, sup_tau: float | None = None,
                        heat: tuple[float, float, float] | None = None) -> AbpReport:
    """Parabolic analogue on Q_T = [0, T) x D with zero terminal data."""
    cfg = SolverConfig() if cfg is None else cfg
    pot = _as_potential(potential)
    src = _as_source(source)
    p = src.p if p is None else float(p)
    d = domain.dim
    if not (p - 1 > d / (2 * spec.scaling.mu_low)):
        raise ArgumentError(f"p - 1 must exceed d/(2 mu_low) = {d / (2 * spec.scaling.mu_low):g}")
    if pot is not None and not pot.nonneg:
        raise UnsupportedError("the ABP bound requires V >= 0")
    if sup_tau is None:
        chain = moment_chain(spec, domain, ks=(1,), cfg=cfg, stream=stream + 1000)
        sup_tau = max(m.mean + m.z_crit * m.stderr for m in chain.mean_tau)
    if src.time_dependent:
        f_norm = lp_norm(src.fn, domain, p, time_interval=(0.0, T))
    else:
        f_norm = lp_norm(src.fn, domain, p) * T ** (1 / p)
    rhs, consts = parabolic_abp_rhs(spec, d, p, f_norm, sup_tau, heat)
    times = [0.0, T / 2] if times is None else list(times)
    best, best_se = -math.inf, 0.0
    for j, t in enumerate(times):
        for i, x in enumerate(domain.line_grid(n_grid)):
            e = solve_parabolic(spec, domain, pot, src, None, T, t, x, cfg, stream=stream + 100 * j + i)
            if e.mean > best:
                best, best_se = e.mean, e.stderr
    lhs = max(best, 0.0)
    consts["T"] = T
    return AbpReport(lhs, best_se, rhs, consts, bool(lhs <= rhs), kind="parabolic")


# ============================================================== refined ABP ingredient


@dataclass(frozen=True)
class RefinedAbpCheck:
    sup_expectation: float
    bound: float
    ratio_max_min: float
    lambda_star: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def refined_abp_check(spec_or_alpha, domain: Interval, potential: Callable, weight: float = 1.0,
                      margin: float = 0.25, n_cells: int = 400) -> RefinedAbpCheck:
    """sup_x E^x[int_0^tau e^{-int weight V}] against (max_D phi* / min_D phi*) / lambda* on the grid oracle.

    The eigenpair belongs to the enlarged interval D_n = D + margin with
    potential ``weight * V``, and needs lambda* > 0.  The expectation is the
    grid solution of (A + weight V) u = 1 on D itself.
    """
    from .spectral import GridOperator, _alpha_of

    alpha = _alpha_of(spec_or_alpha)
    base = GridOperator(alpha, domain.lo, domain.hi, n_cells)
    v = weight * np.asarray(potential(base.nodes), dtype=float) * np.ones_like(base.nodes)
    u = np.linalg.solve(GridOperator(alpha, domain.lo, domain.hi, n_cells, v).matrix, np.ones(v.size))
    big = domain.expanded(margin)
    cells = int(round(n_cells * big.diam / domain.diam))
    big_base = GridOperator(alpha, big.lo, big.hi, cells)
    vb = weight * np.asarray(potential(big_base.nodes), dtype=float) * np.ones_like(big_base.nodes)
    lam, phi = GridOperator(alpha, big.lo, big.hi, cells, vb).principal()
    if not (lam > 0):
        raise ArgumentError("the enlarged domain must have a positive principal eigenvalue")
    inside = (big_base.nodes >= domain.lo) & (big_base.nodes <= domain.hi)
    ratio = float(phi[inside].max() / phi[inside].min())
    bound = ratio / lam
    return RefinedAbpCheck(float(u.max()), bound, ratio, lam, bool(u.max() <= bound))
