"""Principal eigenvalue and eigenfunction of Psi(-Delta) + V with zero exterior condition.

Two independent routes:

* a deterministic 1-D grid operator (quadrature of the principal-value
  integral for (-Delta)^{alpha/2} with the zero extension folded into the
  diagonal; second differences for alpha = 2), extrapolated over meshes;
* Monte Carlo: the decay rate of u(t) = E^x[exp(-int_0^t V) 1{tau_D > t}],
  estimated with a Fleming-Viot style splitting population so that rare
  survivors are not starved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, special

from . import bernstein as bs
from .bernstein import BernsteinSpec, Kind
from .config import SolverConfig
from .errors import ArgumentError, ResourceError, SingularError, UnsupportedError
from .estimate import McEstimate
from .rng import block_rng
from .sbm import Ball, Domain, Interval, Stop, resolve_steps, simulate, step_paths
from .subordinator import make_sampler

__all__ = [
    "GridOperator", "GridOracle", "fractional_constant", "grid_oracle_1d", "aitken",
    "EigenEstimate", "estimate_lambda_star", "survival_curve", "eigenfunction_ratio",
    "CurveReport", "lambda_curve", "domain_monotonicity", "potential_monotonicity",
]

SINGULAR_TOL = 1e-8
MIN_SURVIVORS = 100
RELIABLE_R2 = 0.99


# ============================================================== grid oracle


def fractional_constant(alpha: float) -> float:
    """Normalizing constant C_{1,alpha} of (-Delta)^{alpha/2} in one dimension."""
    return alpha * 2 ** (alpha - 1) * special.gamma((1 + alpha) / 2) / (math.sqrt(math.pi) * special.gamma(1 - alpha / 2))


def _antiderivative(z, alpha: float):
    # second antiderivative of z^{-1-alpha}
    if alpha == 1:
        return -np.log(z)
    return -z ** (1 - alpha) / (alpha * (1 - alpha))


def _stencil(alpha: float, n: int) -> np.ndarray:
    """First column of the Toeplitz matrix h^alpha / C * A for ``n`` interior nodes."""
    col = np.zeros(n)
    col[0] = 2 / (2 - alpha) + 2 / alpha
    if n > 1:
        g = lambda z: _antiderivative(np.asarray(z, dtype=float), alpha)  # noqa: E731
        first = g(2.0) - g(1.0) + 1.0 ** (-alpha) / alpha
        col[1] = -(1 / (2 - alpha) + first)
    if n > 2:
        k = np.arange(2, n, dtype=float)
        g = lambda z: _antiderivative(z, alpha)  # noqa: E731
        col[2:] = -(g(k + 1) - 2 * g(k) + g(k - 1))
    return col


@dataclass
class GridOperator:
    """Dense discretization of (-Delta)^{alpha/2} + V on an interval, zero outside."""

    alpha: float
    lo: float
    hi: float
    n_cells: int
    potential: np.ndarray | None = None

    def __post_init__(self):
        if not (0 < self.alpha <= 2):
            raise ArgumentError("alpha must lie in (0, 2]")
        if self.n_cells < 4:
            raise ArgumentError("need at least 4 cells")
        if not (self.hi > self.lo):
            raise ArgumentError("interval needs lo < hi")
        if self.potential is not None:
            self.potential = np.asarray(self.potential, dtype=float)
            if self.potential.shape != (self.n_cells - 1,):
                raise ArgumentError("potential must have one value per interior node")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n_cells

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.lo + self.h * np.arange(1, self.n_cells)

    @cached_property
    def matrix(self) -> np.ndarray:
        n = self.n_cells - 1
        if self.alpha == 2:
            a = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / self.h ** 2
        else:
            a = fractional_constant(self.alpha) * self.h ** (-self.alpha) * linalg.toeplitz(_stencil(self.alpha, n))
        if self.potential is not None:
            a = a + np.diag(self.potential)
        return a

    @cached_property
    def _spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        return linalg.eigh(self.matrix)

    def principal(self) -> tuple[float, np.ndarray]:
        """Smallest eigenvalue and positive unit eigenvector, by inverse iteration from a Gershgorin shift."""
        a = self.matrix
        n = a.shape[0]
        shift = float(np.min(np.diag(a) - np.sum(np.abs(a), axis=1) + np.abs(np.diag(a)))) - 1.0
        lu = linalg.lu_factor(a - shift * np.eye(n))
        v = np.ones(n) / math.sqrt(n)
        lam = shift
        for _ in range(2000):
            w = linalg.lu_solve(lu, v)
            w /= np.linalg.norm(w)
            new = float(w @ a @ w)
            if abs(new - lam) <= 1e-13 * max(1.0, abs(new)) and np.linalg.norm(w - v) < 1e-10:
                v, lam = w, new
                break
            v, lam = w, new
        if v.sum() < 0:
            v = -v
        return lam, v

    def eigenvalues(self, k: int = 3) -> np.ndarray:
        return self._spectrum[0][:k]

    def resolvent(self, lam: float, f: np.ndarray) -> np.ndarray:
        """(A - lam I)^{-1} f; refuses lam within 1e-8 of the spectrum."""
        f = np.asarray(f, dtype=float)
        ev = self._spectrum[0]
        gap = float(np.min(np.abs(ev - lam)))
        if gap < SINGULAR_TOL:
            raise SingularError(f"lambda = {lam:g} is within {gap:.2g} of an eigenvalue")
        return linalg.solve(self.matrix - lam * np.eye(ev.size), f, assume_a="sym")

    def evaluate_on(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.asarray(fn(self.nodes), dtype=float)


def aitken(a: float, b: float, c: float) -> float:
    """Aitken delta-squared limit of a sequence with terms a, b, c (meshes N, 2N, 4N)."""
    den = (c - b) - (b - a)
    if den == 0 or not np.isfinite(den):
        return c
    ratio = (c - b) / (b - a) if b != a else 0.0
    if not (0 < ratio < 1):
        return c
    return c - (c - b) ** 2 / den


@dataclass(frozen=True)
class GridOracle:
    lambda_star: float
    lambda_meshes: tuple[float, ...]
    meshes: tuple[int, ...]
    nodes: np.ndarray
    eigenvector: np.ndarray
    operator: GridOperator = field(repr=False)

    def resolvent(self, lam: float, f) -> np.ndarray:
        """Resolvent on the finest mesh; ``f`` is a callable or node values."""
        fv = self.operator.evaluate_on(f) if callable(f) else np.asarray(f, dtype=float)
        return self.operator.resolvent(lam, fv)

    def eigenfunction(self, x) -> np.ndarray:
        """Principal eigenvector interpolated linearly, zero outside the interval."""
        op = self.operator
        xs = np.concatenate([[op.lo], self.nodes, [op.hi]])
        vs = np.concatenate([[0.0], self.eigenvector, [0.0]])
        return np.interp(np.asarray(x, dtype=float), xs, vs, left=0.0, right=0.0)

    @property
    def change(self) -> float:
        """Relative change between the two extrapolation inputs on the finest meshes."""
        a, b = self.lambda_meshes[-2:]
        return abs(b - a) / abs(b)


def _alpha_of(spec_or_alpha) -> float:
    if isinstance(spec_or_alpha, BernsteinSpec):
        if spec_or_alpha.kind is Kind.LINEAR:
            return 2.0
        if spec_or_alpha.kind is Kind.STABLE:
            return spec_or_alpha.alpha
        raise UnsupportedError("the grid oracle covers the stable and linear exponents only")
    return float(spec_or_alpha)


def _potential_nodes(potential, op_nodes: np.ndarray) -> np.ndarray | None:
    if potential is None:
        return None
    if callable(potential):
        return np.asarray(potential(op_nodes), dtype=float) * np.ones_like(op_nodes)
    raise ArgumentError("potential must be a callable of the node coordinates")


def grid_oracle_1d(spec_or_alpha, interval: Interval | tuple[float, float], potential=None,
                   n_cells: int = 400, levels: int = 3) -> GridOracle:
    """Principal eigenpair on meshes n, 2n, 4n, with the eigenvalue Aitken-extrapolated.

    ``potential`` is a callable evaluated at the nodes.  The eigenvector and
    the resolvent come from the finest mesh.
    """
    alpha = _alpha_of(spec_or_alpha)
    lo, hi = (interval.lo, interval.hi) if isinstance(interval, Interval) else map(float, interval)
    meshes = tuple(n_cells * 2 ** i for i in range(levels))
    lams = []
    op = None
    vec = None
    for m in meshes:
        base = GridOperator(alpha, lo, hi, m)
        op = GridOperator(alpha, lo, hi, m, _potential_nodes(potential, base.nodes))
        lam, vec = op.principal()
        lams.append(lam)
    lam_star = aitken(*lams[-3:]) if levels >= 3 else lams[-1]
    vec = vec / np.max(vec)
    return GridOracle(float(lam_star), tuple(lams), meshes, op.nodes, vec, op)


# ============================================================== Monte Carlo eigenvalue


@dataclass(frozen=True)
class EigenEstimate:
    lambda_star: float
    stderr: float
    fit_window: tuple[float, float]
    fit_r2: float
    method: str
    t_grid: tuple[float, ...] = ()
    log_u: tuple[float, ...] = ()
    flags: tuple[str, ...] = ()

    @property
    def reliable(self) -> bool:
        return self.method == "GridOracle" or self.fit_r2 >= RELIABLE_R2

    def to_dict(self) -> dict:
        return {"lambda_star": self.lambda_star, "stderr": self.stderr, "fit_window": list(self.fit_window),
                "fit_r2": self.fit_r2, "method": self.method, "reliable": self.reliable, "flags": list(self.flags)}


def _systematic(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    c = np.cumsum(weights)
    c /= c[-1]
    u = (rng.random() + np.arange(n)) / n
    return np.minimum(np.searchsorted(c, u, side="right"), weights.size - 1)


def _population_run(sampler, domain: Domain, starts: np.ndarray, potential, t_grid: np.ndarray,
                    dt: float, bridge: bool, rng: np.random.Generator) -> np.ndarray:
    """log u(t) on ``t_grid`` for one splitting population."""
    n = starts.shape[0]
    pos = starts.copy()
    logw = np.zeros(n)
    alive = np.ones(n, bool)
    log_mass = 0.0
    out = np.empty(t_grid.size)
    t = 0.0
    gi = 0
    t_end = float(t_grid[-1])
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    for j in range(n_steps):
        t_next = min((j + 1) * dt, t_end)
        h = t_next - t
        idx = np.flatnonzero(alive)
        xa = pos[idx]
        if potential is not None:
            logw[idx] -= potential(xa) * h
        xn, exited, *_ = step_paths(sampler, domain, xa, h, rng, bridge)
        pos[idx] = xn
        alive[idx[exited]] = False
        t = t_next
        n_alive = int(alive.sum())
        if n_alive < MIN_SURVIVORS:
            raise ResourceError(
                f"only {n_alive} survivors at t={t:.4g}; increase n_paths or reduce dt")
        live = logw[alive]
        top = float(live.max())
        w = np.where(alive, np.exp(logw - top), 0.0)
        while gi < t_grid.size and t >= t_grid[gi] - 1e-12:
            out[gi] = log_mass + top + math.log(w.sum() / n)
            gi += 1
        ess = w.sum() ** 2 / (n * float(np.sum(w * w)))
        if ess < 0.5:
            log_mass += top + math.log(w.sum() / n)
            pick = _systematic(w, n, rng)
            pos = pos[pick]
            logw = np.zeros(n)
            alive = np.ones(n, bool)
    return out


def survival_curve(spec, domain: Domain, potential, x_set, t_grid, cfg: SolverConfig,
                   replicates: int = 8, stream: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-replicate u(t) = E[exp(-int V) 1{tau > t}] with starts spread over ``x_set``.

    Returns an array (replicates, len(t_grid)) of u values and the grid.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .rng import default_workers

    sampler = make_sampler(spec, seed=cfg.seed)
    spec = sampler.spec
    dt, _ = resolve_steps(spec, domain, cfg)
    bridge = bool(cfg.bridge_correction and sampler.drift > 0)
    t_grid = np.asarray(t_grid, dtype=float)
    xs = domain._pts(np.asarray(x_set, dtype=float))
    if not np.all(domain.contains(xs)):
        raise ArgumentError("x_set must lie in the domain")
    per = max(cfg.n_paths // replicates, MIN_SURVIVORS)
    starts = xs[np.arange(per) % xs.shape[0]]
    pot = None if potential is None else (lambda x: np.asarray(potential(x), dtype=float).reshape(-1))

    def one(r: int):
        return _population_run(sampler, domain, starts, pot, t_grid, dt, bridge, block_rng(cfg.seed, stream, r))

    workers = default_workers() if cfg.workers is None else cfg.workers
    if workers <= 1:
        logs = [one(r) for r in range(replicates)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(one, range(replicates)))
    return np.exp(np.array(logs)), t_grid


def _best_window(t: np.ndarray, y: np.ndarray) -> tuple[int, int, float]:
    n = t.size
    min_len = max(4, n // 2)
    best = (0, n, -1.0)
    for i in range(0, n - min_len + 1):
        for j in range(i + min_len, n + 1):
            tt, yy = t[i:j], y[i:j]
            r = np.corrcoef(tt, yy)[0, 1] if np.std(yy) > 0 else 1.0
            r2 = float(r * r)
            if r2 > best[2] + 1e-12:
                best = (i, j, r2)
    return best


def estimate_lambda_star(spec, domain: Domain, potential=None, x_set=None, t_grid=None,
                         cfg: SolverConfig | None = None, replicates: int = 8, stream: int = 0) -> EigenEstimate:
    """lambda* as minus the slope of log u(t) on the best-fitting linear window of ``t_grid``."""
    cfg = SolverConfig(n_paths=16000) if cfg is None else cfg
    spec_obj = spec.spec if hasattr(spec, "spec") else spec
    if t_grid is None:
        scale = 1.0 / bs.evaluate(spec_obj, domain.inrad ** -2)
        t_grid = scale * np.linspace(0.4, 3.0, 14)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 6 or np.any(np.diff(t_grid) <= 0) or t_grid[0] <= 0:
        raise ArgumentError("t_grid must be positive, increasing and have at least 6 points")
    if x_set is None:
        c = domain.center
        off = np.zeros(domain.dim)
        off[0] = domain.inrad / 4
        x_set = np.stack([c - off, c, c + off])
    u, _ = survival_curve(spec, domain, potential, x_set, t_grid, cfg, replicates, stream)
    ubar = u.mean(axis=0)
    y = np.log(ubar)
    i, j, r2 = _best_window(t_grid, y)
    tt = t_grid[i:j]
    coef = (tt - tt.mean()) / np.sum((tt - tt.mean()) ** 2)
    slope = float(coef @ y[i:j])
    cov = np.cov(u[:, i:j], rowvar=False) / u.shape[0]
    grad = coef / ubar[i:j]
    se = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    flags = () if r2 >= RELIABLE_R2 else ("unreliable-fit",)
    return EigenEstimate(-slope, se, (float(tt[0]), float(tt[-1])), r2, "SurvivalSlope",
                         tuple(t_grid.tolist()), tuple(y.tolist()), flags)


# ============================================================== eigenfunction ratio


@dataclass(frozen=True)
class RatioEstimate:
    value: McEstimate
    coarse: McEstimate
    extrapolation_error: float
    radius: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"value": self.value.to_dict(), "coarse": self.coarse.to_dict(),
                "extrapolation_error": self.extrapolation_error, "radius": self.radius, "flags": list(self.flags)}


def _hit_functional(spec, domain, potential, lam, x, center, r, cfg, stream):
    ball = Ball(tuple(np.atleast_1d(center).astype(float)), r)
    pot = None if potential is None else (lambda t, y: np.asarray(potential(y), dtype=float).reshape(-1))
    b = simulate(spec, domain, np.atleast_1d(x), cfg, target=ball, potential=pot, stream=stream)
    vals = np.where(b.reason == Stop.HIT, np.exp(lam * b.tau - b.int_v), 0.0)
    return McEstimate.from_samples(vals, cfg.ci_level)


def eigenfunction_ratio(spec, domain: Domain, potential, lambda_star, x, x_hat, r: float,
                        cfg: SolverConfig | None = None, stream: int = 0) -> RatioEstimate:
    """phi*(x) / phi*(x_hat) from E^x[exp(lambda* T - int_0^T V) 1{T < tau_D}], T the entrance time of B_r(x_hat).

    Radii r and r/2 share random numbers; the r/2 value is reported and the
    difference is the extrapolation error.
    """
    cfg = SolverConfig(n_paths=40000) if cfg is None else cfg
    flags: tuple[str, ...] = ()
    if isinstance(lambda_star, EigenEstimate):
        if not lambda_star.reliable:
            flags = ("unreliable-lambda",)
        lam = lambda_star.lambda_star
    else:
        lam = float(lambda_star)
    xh = np.atleast_1d(np.asarray(x_hat, dtype=float))
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    if not (r > 0):
        raise ArgumentError("radius must be positive")
    if not domain.contains_closed_ball(xh, r):
        raise ArgumentError("the ball around x_hat must be compactly inside the domain")
    if np.linalg.norm(xv - xh) <= r:
        raise ArgumentError("x must lie outside the closed ball around x_hat")
    coarse = _hit_functional(spec, domain, potential, lam, xv, xh, r, cfg, stream)
    fine = _hit_functional(spec, domain, potential, lam, xv, xh, r / 2, cfg, stream)
    return RatioEstimate(fine, coarse, abs(fine.mean - coarse.mean), r / 2, flags + fine.flags)


# ============================================================== curves and monotonicity


@dataclass(frozen=True)
class CurveReport:
    s: tuple[float, ...]
    values: tuple[float, ...]
    concave: bool
    lipschitz: bool
    sup_v: float
    tolerance: float
    worst_concavity: float
    worst_lipschitz: float

    def to_dict(self) -> dict:
        return dict(self.__dict__, s=list(self.s), values=list(self.values))


def lambda_curve(spec_or_alpha, domain: Interval, potential: Callable, s_grid: Sequence[float],
                 sup_v: float | None = None, tolerance: float = 1e-6, n_cells: int = 400) -> CurveReport:
    """Lambda(s) = lambda* for potential s V on the grid oracle, with concavity and Lipschitz checks.

    Values come from a single mesh so that the checks see one consistent
    operator; ``tolerance`` absorbs floating-point noise only.
    """
    s = [float(v) for v in s_grid]
    if any(v < 0 for v in s):
        raise ArgumentError("s values must be non-negative")
    alpha = _alpha_of(spec_or_alpha)
    base = GridOperator(alpha, domain.lo, domain.hi, n_cells)
    vnodes = np.asarray(potential(base.nodes), dtype=float) * np.ones_like(base.nodes)
    if np.any(vnodes < 0):
        raise ArgumentError("potential must be non-negative")
    sup_v = float(np.max(np.abs(vnodes))) if sup_v is None else float(sup_v)
    vals = [GridOperator(alpha, domain.lo, domain.hi, n_cells, si * vnodes).principal()[0] for si in s]
    worst_c = 0.0
    worst_l = 0.0
    m = len(s)
    cache: dict[float, float] = dict(zip(s, vals))
    for a in range(m):
        for b in range(a + 1, m):
            mid = (s[a] + s[b]) / 2
            if mid not in cache:
                cache[mid] = GridOperator(alpha, domain.lo, domain.hi, n_cells, mid * vnodes).principal()[0]
            worst_c = max(worst_c, (vals[a] + vals[b]) / 2 - cache[mid])
            worst_l = max(worst_l, abs(vals[a] - vals[b]) - sup_v * abs(s[a] - s[b]))
    return CurveReport(tuple(s), tuple(vals), worst_c <= tolerance, worst_l <= tolerance, sup_v, tolerance,
                       worst_c, worst_l)


@dataclass(frozen=True)
class MonotonicityReport:
    labels: tuple[str, ...]
    values: tuple[float, ...]
    stderrs: tuple[float, ...]
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return dict(self.__dict__, labels=list(self.labels), values=list(self.values), stderrs=list(self.stderrs))


def domain_monotonicity(spec_or_alpha, domain: Interval, margins=(1.0, 0.5, 0.25), n_cells: int = 200,
                        potential=None) -> MonotonicityReport:
    """lambda* of enlarged intervals D_n (margin m on each side) stays below lambda*(D) and rises as m shrinks."""
    lam0 = grid_oracle_1d(spec_or_alpha, domain, potential, n_cells=n_cells).lambda_star
    vals = []
    for m in margins:
        big = domain.expanded(m)
        cells = int(round(n_cells * big.diam / domain.diam))
        vals.append(grid_oracle_1d(spec_or_alpha, big, potential, n_cells=cells).lambda_star)
    below = all(v < lam0 for v in vals)
    rising = all(b > a for a, b in zip(vals, vals[1:]))
    labels = tuple(f"margin={m:g}" for m in margins) + ("D",)
    return MonotonicityReport(labels, tuple(vals) + (lam0,), (0.0,) * (len(vals) + 1), below and rising,
                              f"below={below} rising={rising}")


def potential_monotonicity(spec_or_alpha, domain: Interval, potential, bump: Callable, n_cells: int = 400,
                           ) -> MonotonicityReport:
    """Raising V by a non-negative bump supported on an open subinterval strictly raises lambda*."""
    op0 = GridOperator(_alpha_of(spec_or_alpha), domain.lo, domain.hi, n_cells)
    v0 = np.zeros_like(op0.nodes) if potential is None else np.asarray(potential(op0.nodes), dtype=float) * 1.0
    b = np.asarray(bump(op0.nodes), dtype=float) * np.ones_like(op0.nodes)
    if np.any(b < 0) or not np.any(b > 0):
        raise ArgumentError("bump must be non-negative and not identically zero")
    lam_a = GridOperator(op0.alpha, domain.lo, domain.hi, n_cells, v0).principal()[0]
    lam_b = GridOperator(op0.alpha, domain.lo, domain.hi, n_cells, v0 + b).principal()[0]
    return MonotonicityReport(("V", "V+bump"), (lam_a, lam_b), (0.0, 0.0), lam_b > lam_a,
                              f"increase={lam_b - lam_a:.6g}")
