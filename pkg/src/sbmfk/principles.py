"""Executable checks of maximum principles, Liouville-side bounds and the recurrence classifiers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import bernstein as bs
from . import heatkernel as hk
from .bernstein import BernsteinSpec, Kind
from .config import SolverConfig
from .errors import ArgumentError, SingularError, UnsupportedError
from .estimate import McEstimate
from .sbm import Ball, Domain, Interval, Stop, resolve_steps, simulate
from .spectral import GridOperator, _alpha_of, grid_oracle_1d

__all__ = [
    "NARROW_THETA", "PrincipleVerdict", "SignScan", "maxprinciple_scan", "candidate_check", "AntimaxReport",
    "antimax_scan", "narrow_domain_check", "LiouvilleReport", "liouville_checks", "harmonic_flatness",
    "hitting_profile", "Recurrence", "recurrence_classify", "Classification", "classify", "semilinear_range",
    "lane_emden_value",
]

# universal constant of the narrow-domain maximum principle
NARROW_THETA = 0.083


@dataclass(frozen=True)
class PrincipleVerdict:
    principle: str
    parameters: dict
    passed: bool
    witnesses: tuple[dict, ...] = ()
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"principle": self.principle, "parameters": self.parameters, "pass": self.passed,
                "witnesses": list(self.witnesses), "detail": self.detail}


def _verdict(principle: str, parameters: dict, passed: bool, witnesses: Sequence[dict], detail: dict):
    # witnesses accompany failures only
    return PrincipleVerdict(principle, parameters, passed, () if passed else tuple(witnesses), detail)


def _sign(values: np.ndarray) -> str:
    if np.all(values > 0):
        return "positive"
    if np.all(values < 0):
        return "negative"
    return "mixed"


# ============================================================== maximum principle


@dataclass(frozen=True)
class SignScan:
    lambda_star: float
    lambdas: tuple[float, ...]
    signs: tuple[str, ...]
    min_values: tuple[float, ...]
    max_values: tuple[float, ...]
    verdict: PrincipleVerdict


def _operator(spec_or_alpha, domain: Interval, potential, n_cells: int) -> GridOperator:
    alpha = _alpha_of(spec_or_alpha)
    base = GridOperator(alpha, domain.lo, domain.hi, n_cells)
    v = None if potential is None else np.asarray(potential(base.nodes), dtype=float) * np.ones_like(base.nodes)
    return GridOperator(alpha, domain.lo, domain.hi, n_cells, v)


def maxprinciple_scan(spec_or_alpha, domain: Interval, potential, source: Callable, lambda_grid,
                      n_cells: int = 400, exclusion: float = 1e-6) -> SignScan:
    """Sign of psi = (H - lambda)^{-1} f at the grid nodes for each lambda.

    lambda* is the principal eigenvalue of the same grid operator, so the
    comparison is exact for the discrete problem.  Passes when psi > 0 for
    every lambda < lambda*.
    """
    op = _operator(spec_or_alpha, domain, potential, n_cells)
    f = np.asarray(source(op.nodes), dtype=float) * np.ones_like(op.nodes)
    if np.any(f < 0) or not np.any(f > 0):
        raise ArgumentError("source must be non-negative and not identically zero")
    lam_star = op.principal()[0]
    lams, signs, mins, maxs, wit = [], [], [], [], []
    for lam in map(float, lambda_grid):
        if abs(lam - lam_star) < exclusion:
            raise SingularError(f"lambda = {lam:g} lies within {exclusion:g} of lambda* = {lam_star:.10g}")
        psi = op.resolvent(lam, f)
        s = _sign(psi)
        lams.append(lam)
        signs.append(s)
        mins.append(float(psi.min()))
        maxs.append(float(psi.max()))
        if lam < lam_star and s != "positive":
            i = int(np.argmin(psi))
            wit.append({"lambda": lam, "x": float(op.nodes[i]), "psi": float(psi[i])})
    verdict = _verdict("refined_maximum_principle", {"lambda_star": lam_star, "n_cells": n_cells}, not wit, wit,
                       {"signs": dict(zip(map(repr, lams), signs))})
    return SignScan(lam_star, tuple(lams), tuple(signs), tuple(mins), tuple(maxs), verdict)


@dataclass(frozen=True)
class CandidateCheck:
    is_supersolution: bool
    min_value: float
    counterexample: bool
    worst_residual: float


def candidate_check(spec_or_alpha, domain: Interval, potential, candidate: Callable, lam: float,
                    n_cells: int = 400, tol: float = 1e-9) -> CandidateCheck:
    """Is a negative super-solution of H - lambda (zero outside D) offered as a counterexample?

    With lambda < lambda* every super-solution must be positive, so a
    candidate is accepted as a counterexample only if it is a super-solution
    and somewhere negative.  Anything else is refused.
    """
    op = _operator(spec_or_alpha, domain, potential, n_cells)
    v = np.asarray(candidate(op.nodes), dtype=float) * np.ones_like(op.nodes)
    res = op.matrix @ v - lam * v
    scale = max(1.0, float(np.max(np.abs(op.matrix @ v))))
    sup = bool(np.all(res >= -tol * scale))
    return CandidateCheck(sup, float(v.min()), bool(sup and v.min() < 0), float(res.min()))


# ============================================================== anti-maximum principle


@dataclass(frozen=True)
class AntimaxReport:
    lambda_star: float
    deltas: tuple[float, ...]
    full: tuple[bool, ...]
    weak: tuple[bool, ...]
    midpoint: tuple[float, ...]
    verified_full: float
    verified_weak: float

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def antimax_scan(alpha, domain: Interval, potential, source: Callable, delta_grid, n_cells: int = 400) -> AntimaxReport:
    """Sign of psi = (H - lambda* - delta)^{-1} f over delta, on the whole interior and on the middle half.

    ``verified_*`` is the largest delta such that every grid delta up to it
    shows psi < 0 (0 when the smallest delta already fails).
    """
    deltas = sorted(float(d) for d in delta_grid)
    if not deltas or deltas[0] <= 0:
        raise ArgumentError("delta values must be positive")
    op = _operator(alpha, domain, potential, n_cells)
    f = np.asarray(source(op.nodes), dtype=float) * np.ones_like(op.nodes)
    if np.any(f < 0) or not np.any(f > 0):
        raise ArgumentError("source must be non-negative and not identically zero")
    lam_star = op.principal()[0]
    quarter = domain.diam / 4
    inner = (op.nodes >= domain.lo + quarter) & (op.nodes <= domain.hi - quarter)
    mid = int(np.argmin(np.abs(op.nodes - (domain.lo + domain.hi) / 2)))
    full, weak, mids = [], [], []
    for dlt in deltas:
        psi = op.resolvent(lam_star + dlt, f)
        full.append(bool(np.all(psi < 0)))
        weak.append(bool(np.all(psi[inner] < 0)))
        mids.append(float(psi[mid]))

    def verified(flags):
        best = 0.0
        for dlt, ok in zip(deltas, flags):
            if not ok:
                break
            best = dlt
        return best

    return AntimaxReport(lam_star, tuple(deltas), tuple(full), tuple(weak), tuple(mids), verified(full), verified(weak))


# ============================================================== narrow domains


def _potential_samples(potential: Callable, domain: Domain, n: int = 257) -> np.ndarray:
    lo, hi = domain.bounding_box()
    d = domain.dim
    m = max(3, int(round(n ** (1 / d))))
    axes = [np.linspace(lo[i], hi[i], m + 2)[1:-1] for i in range(d)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    pts = pts[domain.contains(pts)]
    return np.asarray(potential(pts), dtype=float) * np.ones(pts.shape[0])


def _exact_lambda(spec: BernsteinSpec, domain: Domain, potential: Callable) -> float | None:
    if not isinstance(domain, Interval) or spec.kind not in (Kind.LINEAR, Kind.STABLE):
        return None
    return grid_oracle_1d(spec, domain, lambda x: potential(x.reshape(-1, 1)), n_cells=200).lambda_star


def narrow_domain_check(spec: BernsteinSpec, domain: Domain, potential: Callable, cfg: SolverConfig | None = None,
                        source: Callable | None = None, n_test: int = 5, z: float = 3.0, stream: int = 0
                        ) -> PrincipleVerdict:
    """Gate ||V^-|| - inf V^+ < theta Psi(inrad^-2); if it holds, sub-solutions built by FK must be <= 0.

    The candidate is phi(x) = E^x[int_0^tau exp(-int V) f] with f <= 0
    (default f = -1) and zero exterior data.  The check asserts phi <= 0 at
    the test points within ``z`` standard errors and the dichotomy phi = 0
    everywhere or phi < 0 everywhere.
    """
    if not domain.convex:
        raise UnsupportedError("the narrow-domain principle is stated for convex domains")
    cfg = SolverConfig() if cfg is None else cfg
    v = _potential_samples(potential, domain)
    v_minus = float(np.max(np.maximum(-v, 0.0)))
    inf_v_plus = float(np.min(np.maximum(v, 0.0)))
    lhs = v_minus - inf_v_plus
    rhs = NARROW_THETA * bs.evaluate(spec, domain.inrad ** -2)
    params = {"spec": spec.label, "domain": domain.to_dict(), "theta": NARROW_THETA}
    detail = {"gate_lhs": lhs, "gate_rhs": rhs, "gate": bool(lhs < rhs)}
    lam = _exact_lambda(spec, domain, potential)
    if lam is not None:
        detail["lambda_star"] = lam
        detail["maximum_principle_exact"] = bool(lam > 0)
    if not lhs < rhs:
        detail["note"] = "gate not satisfied; no assertion made"
        return _verdict("narrow_domain", params, False, [{"gate_lhs": lhs, "gate_rhs": rhs}], detail)
    f = (lambda x: -np.ones(x.shape[0])) if source is None else source
    pts = domain.line_grid(n_test)
    pot = lambda t, x: np.asarray(potential(x), dtype=float) * np.ones(x.shape[0])  # noqa: E731
    src = lambda t, x: np.asarray(f(x), dtype=float) * np.ones(x.shape[0])  # noqa: E731
    fv = _potential_samples(f, domain)
    if np.any(fv > 0):
        raise ArgumentError("the candidate source must be non-positive")
    ests, wit = [], []
    for i, x in enumerate(pts):
        b = simulate(spec, domain, x, cfg, potential=pot, source=src, stream=stream + i)
        e = McEstimate.from_samples(b.integral, cfg.ci_level)
        ests.append(e)
        if e.mean - z * e.stderr > 0:
            wit.append({"x": x.tolist(), "phi": e.mean, "stderr": e.stderr})
    zero = all(e.mean == 0 and e.stderr == 0 for e in ests)
    negative = all(e.mean + z * e.stderr < 0 for e in ests)
    if not (zero or negative):
        wit.append({"dichotomy": "neither identically zero nor negative at every test point"})
    detail["phi"] = [e.mean for e in ests]
    detail["phi_stderr"] = [e.stderr for e in ests]
    return _verdict("narrow_domain", params, not wit, wit, detail)


# ============================================================== recurrence and exponents


@dataclass(frozen=True)
class Recurrence:
    recurrent: bool | None
    method: str
    panel_sums: tuple[float, ...] = ()


CF_PANELS = 80


def recurrence_classify(spec: BernsteinSpec, d: int, r: float = 1.0) -> Recurrence:
    """Chung-Fuchs test on int_0^r u^{d/2-1} / Psi(u) du over dyadic panels toward 0."""
    if d >= 3:
        return Recurrence(False, "d>=3")
    if d > 2 * spec.scaling.mu_up:
        return Recurrence(False, "d>2mu_up")
    from scipy import integrate

    sums = []
    for k in range(CF_PANELS):
        a, b = r * 2.0 ** (-k - 1), r * 2.0 ** (-k)
        # substitute u = b e^{-s} to keep the panel well scaled
        g = lambda s: (b * math.exp(-s)) ** (d / 2) / bs.evaluate(spec, b * math.exp(-s))  # noqa: E731
        val, _ = integrate.quad(g, 0.0, math.log(b / a), epsrel=1e-12)
        sums.append(val)
    last = np.array(sums[-5:])
    if np.all(np.diff(last) >= -1e-12 * last[:-1]):
        return Recurrence(True, "chung_fuchs", tuple(sums))
    ratios = last[1:] / last[:-1]
    if np.all(ratios < 0.9):
        return Recurrence(False, "chung_fuchs", tuple(sums))
    # slow geometric decay: the tail ratio sum still converges if the ratios settle below 1
    tail = np.array(sums[-20:])
    rat = tail[1:] / tail[:-1]
    if np.all(rat < 1) and np.ptp(rat) < 1e-3:
        return Recurrence(False, "chung_fuchs_ratio", tuple(sums))
    return Recurrence(None, "inconclusive", tuple(sums))


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


def semilinear_range(d: int, mu) -> tuple[Fraction, Fraction] | None:
    """Open interval (1, d/(d - 2mu)) of exponents for the transient Liouville theorem, or None."""
    mu = _frac(mu)
    if not d > 2 * mu:
        return None
    return Fraction(1), Fraction(d) / (d - 2 * mu)


def lane_emden_value(p, q, mu1, mu2) -> Fraction:
    """max of the two exponent fractions of the Lane-Emden system condition, exactly."""
    p, q, mu1, mu2 = map(_frac, (p, q, mu1, mu2))
    den = p * q - 1
    if den <= 0:
        raise ArgumentError("requires p q > 1")
    a = (2 * q * mu2 + 2 * p * q * mu1) / den
    b = (2 * p * mu1 + 2 * p * q * mu2) / den
    return max(a, b)


@dataclass(frozen=True)
class Classification:
    d: int
    recurrent: bool | None
    method: str
    liouville_harmonic: bool
    semilinear_range: tuple[str, str] | None
    lane_emden: dict | None = None

    def to_dict(self) -> dict:
        return {"d": self.d, "recurrent": self.recurrent, "method": self.method,
                "liouville_harmonic": self.liouville_harmonic,
                "semilinear_range": list(self.semilinear_range) if self.semilinear_range else None,
                "lane_emden": self.lane_emden}


def classify(spec: BernsteinSpec, d: int, lane_emden: tuple | None = None) -> Classification:
    """Recurrence, Liouville applicability, the semilinear exponent range and an optional Lane-Emden verdict.

    ``lane_emden`` is (p, q, mu1, mu2); the verdict is non-existence when the
    condition value exceeds d.
    """
    rec = recurrence_classify(spec, d)
    mu = spec.scaling.mu_low
    rng = semilinear_range(d, mu) if rec.recurrent is False else None
    le = None
    if lane_emden is not None:
        val = lane_emden_value(*lane_emden)
        le = {"value": str(val), "nonexistence": bool(val > d)}
    return Classification(int(d), rec.recurrent, rec.method, spec.scaling.theta_low == 0,
                          (str(rng[0]), str(rng[1])) if rng else None, le)


# ============================================================== Liouville checks


def harmonic_flatness(spec, d: int, g: Callable, radii=(4.0, 8.0, 16.0), cfg: SolverConfig | None = None,
                      stream: int = 0) -> dict:
    """Oscillation over the unit ball of h_R(x) = E^x[g(X at exit from B_R)] for growing R.

    h_R is evaluated at x = -e1 and x = +e1 with common random numbers.
    """
    cfg = SolverConfig(n_paths=4000) if cfg is None else cfg
    e1 = np.zeros(d)
    e1[0] = 1.0
    osc, se = [], []
    for j, rad in enumerate(radii):
        ball = Ball(tuple(np.zeros(d)), float(rad))
        vals = []
        for x in (-e1, e1):
            b = simulate(spec, ball, x, cfg, stream=stream + j)
            v = np.asarray(g(b.position), dtype=float).reshape(-1) * np.ones(b.n)
            vals.append(np.where(b.reason == Stop.CENSORED, 0.0, v))
        diff = vals[1] - vals[0]
        est = McEstimate.from_samples(diff, cfg.ci_level)
        osc.append(abs(est.mean))
        se.append(est.stderr)
    return {"radii": [float(r) for r in radii], "oscillation": osc, "stderr": se}


def hitting_profile(spec, d: int, radii=(2.0, 4.0, 8.0), cfg: SolverConfig | None = None,
                    proxy: float = 64.0, stream: int = 0) -> dict:
    """P^x(enter B_1 before leaving B(0, proxy r)) at |x| = r, and the products with r^d Psi(r^-2).

    The proxy ball makes the estimate a lower bound for the free-space probability.
    """
    cfg = SolverConfig(n_paths=4000) if cfg is None else cfg
    target = Ball(tuple(np.zeros(d)), 1.0)
    probs, se, prods = [], [], []
    for j, r in enumerate(radii):
        dom = Ball(tuple(np.zeros(d)), proxy * r)
        dt, _ = resolve_steps(spec, dom, cfg)
        local = cfg.with_(dt=min(dt, 0.02 / bs.evaluate(spec, 1.0))) if cfg.dt is None else cfg
        x = np.zeros(d)
        x[0] = r
        b = simulate(spec, dom, x, local, target=target, stream=stream + j)
        est = McEstimate.from_samples((b.reason == Stop.HIT).astype(float), cfg.ci_level)
        probs.append(est.mean)
        se.append(est.stderr)
        prods.append(est.mean * r ** d * bs.evaluate(spec, r ** -2))
    return {"radii": [float(r) for r in radii], "probability": probs, "stderr": se, "product": prods}


@dataclass(frozen=True)
class LiouvilleReport:
    kernel: dict
    flatness: dict
    hitting: dict | None
    doubling: dict | None
    notices: tuple[str, ...]
    passed: bool

    def to_dict(self) -> dict:
        return {"kernel": self.kernel, "flatness": self.flatness, "hitting": self.hitting, "doubling": self.doubling,
                "notices": list(self.notices), "pass": self.passed}


def liouville_checks(spec: BernsteinSpec, d: int, cfg: SolverConfig | None = None, rhos=(1, 2, 4, 8),
                     z: float = 3.0, hitting_factor: float = 3.0, stream: int = 0) -> LiouvilleReport:
    """Kernel uniformity in rho, harmonic flatness, hitting lower bounds and min-value doubling.

    Hitting and doubling are skipped for recurrent processes.  Doubling uses
    M(r) = P^{r e1}(enter B_1), the minimum over |x| <= r of a radially
    decreasing super-solution, with constant 2^d.
    """
    if spec.scaling.theta_low != 0:
        raise ArgumentError("requires theta_low = 0")
    cfg = SolverConfig(n_paths=4000) if cfg is None else cfg
    delta = spec.scaling.mu_low
    kb = hk.liouville_bounds(spec, rhos, delta, d)
    kernel = kb.to_dict()
    g_var = max(kb.grad_sup) / min(kb.grad_sup) - 1
    m_var = max(kb.moment) / min(kb.moment) - 1
    kernel["variation"] = max(g_var, m_var)
    flat = harmonic_flatness(spec, d, lambda y: (y[:, 0] > 0).astype(float), cfg=cfg, stream=stream)
    osc, se = flat["oscillation"], flat["stderr"]
    flat_ok = all(osc[i + 1] <= osc[i] + z * math.hypot(se[i], se[i + 1]) for i in range(len(osc) - 1))
    flat["decreasing"] = flat_ok
    notices: list[str] = []
    rec = recurrence_classify(spec, d)
    hit = dbl = None
    ok = kb.bounded and flat_ok
    if rec.recurrent is not False:
        notices.append("recurrent or inconclusive: hitting and doubling checks skipped")
    else:
        hit = hitting_profile(spec, d, cfg=cfg, stream=stream + 100)
        pr = hit["product"]
        hit["bounded_below"] = bool(min(pr) > 0 and max(pr) / min(pr) <= hitting_factor)
        probs, pse = hit["probability"], hit["stderr"]
        ratios = []
        for i in range(len(probs) - 1):
            # lower confidence limit of the ratio
            ratios.append(max(probs[i] - z * pse[i], 0.0) / (probs[i + 1] + z * pse[i + 1]))
        dbl = {"constant": 2.0 ** d, "ratio_lower": ratios, "holds": bool(all(r <= 2.0 ** d for r in ratios))}
        ok = ok and hit["bounded_below"] and dbl["holds"]
    return LiouvilleReport(kernel, flat, hit, dbl, tuple(notices), bool(ok))
