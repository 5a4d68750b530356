"""Samplers for subordinator increments S_t and their Laplace-identity check.

Stable laws are generated with Kanter's representation of the one-sided
stable variable; relativistic laws by exponential tilting of a stable draw;
custom Levy pairs by drift + compensated small jumps + compound Poisson.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize
from scipy.special import erfc

from . import bernstein as bs
from .bernstein import BernsteinSpec, Kind
from .errors import ArgumentError, ResourceError, SamplerError, UnsupportedError
from .estimate import McEstimate
from .rng import block_rng, map_blocks

REJECTION_CAP = 10**6
# expected compound-Poisson jumps allowed in one call
JUMP_BUDGET = 5 * 10**7
# small-jump second moment allowed per unit time
SMALL_JUMP_TOL = 1e-6


class Method(str, Enum):
    CLOSED_FORM = "closed_form"
    REJECTION = "rejection"
    TRUNCATED_LEVY = "truncated_levy"


@dataclass(frozen=True)
class SubordinatorSampler:
    spec: BernsteinSpec
    method: Method
    epsilon: float | None = None
    seed: int = 0
    stream: int = 0

    def increments(self, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
        c, j = self.split(t, n, rng)
        return c + j

    def split(self, t: float, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Drift part and jump part of ``n`` independent copies of S_t."""
        if not t > 0:
            raise ArgumentError("increment length must be positive")
        return _split(self, float(t), int(n), rng)

    @property
    def drift(self) -> float:
        return bs.drift_of(self.spec)

    @property
    def has_jumps(self) -> bool:
        return _has_jumps(self.spec)


def _has_jumps(spec: BernsteinSpec) -> bool:
    k = spec.kind
    if k is Kind.LINEAR:
        return False
    if k is Kind.STABLE:
        return spec.alpha < 2
    if k is Kind.STABLE_SUM:
        return spec.alpha < 2 or spec.beta < 2
    if k is Kind.CUSTOM:
        return bool(spec.table_y)
    return True


def make_sampler(spec: BernsteinSpec, method: Method | str | None = None, epsilon: float | None = None,
                 seed: int = 0, stream: int = 0) -> SubordinatorSampler:
    natural = {
        Kind.STABLE: Method.CLOSED_FORM,
        Kind.STABLE_SUM: Method.CLOSED_FORM,
        Kind.LINEAR: Method.CLOSED_FORM,
        Kind.RELATIVISTIC: Method.REJECTION,
        Kind.CUSTOM: Method.TRUNCATED_LEVY,
    }
    if spec.kind not in natural:
        raise UnsupportedError(f"no subordinator sampler for {spec.kind.value}")
    method = natural[spec.kind] if method is None else Method(method)
    if method is not natural[spec.kind]:
        raise UnsupportedError(f"method {method.value} is not available for {spec.kind.value}")
    if epsilon is not None and not epsilon > 0:
        raise ArgumentError("epsilon must be positive")
    return SubordinatorSampler(spec, method, epsilon, int(seed), int(stream))


# ---------------------------------------------------------------- stable core

def positive_stable(a: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-time draws with E exp(-u S) = exp(-u^a), 0 < a < 1 (Kanter)."""
    u = np.pi * rng.random(n)
    u[u == 0.0] = np.pi * 2.0 ** -54
    e = rng.standard_exponential(n)
    log_a = (a * np.log(np.sin(a * u)) + (1 - a) * np.log(np.sin((1 - a) * u)) - np.log(np.sin(u))) / (1 - a)
    return np.exp((1 - a) / a * (log_a - np.log(e)))


def stable_increments(alpha: float, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
    a = alpha / 2
    if a == 1:
        return np.full(n, t)
    return t ** (1 / a) * positive_stable(a, n, rng)


def half_stable_cdf(s, t: float = 1.0):
    """Exact CDF of S_t for Psi(u) = u^{1/2}: P(S_t <= s) = erfc(t / (2 sqrt s))."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(s > 0, erfc(t / (2 * np.sqrt(np.maximum(s, 1e-300)))), 0.0)


def half_stable_density(s, t: float = 1.0):
    s = np.asarray(s, dtype=float)
    return np.where(s > 0, t * s ** -1.5 * np.exp(-t * t / (4 * np.maximum(s, 1e-300))) / (2 * math.sqrt(math.pi)), 0.0)


# ---------------------------------------------------------------- relativistic

def _tilted(alpha: float, mass: float, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
    # accept a stable draw s with probability exp(-M s); the acceptance rate is exp(-m t)
    a = alpha / 2
    M = mass ** (1 / a)
    out = np.empty(n)
    todo = np.arange(n)
    for _ in range(REJECTION_CAP):
        if todo.size == 0:
            return out
        s = stable_increments(alpha, t, todo.size, rng)
        ok = rng.random(todo.size) < np.exp(-M * s)
        out[todo[ok]] = s[ok]
        todo = todo[~ok]
    raise SamplerError(f"rejection sampler exceeded {REJECTION_CAP} rounds with {todo.size} draws pending "
                       f"(acceptance exp(-m t) = {math.exp(-mass * t):.3e})")


def relativistic_increments(alpha: float, mass: float, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
    # split long intervals so each piece is accepted with probability >= 1/e
    pieces = max(1, math.ceil(mass * t))
    h = t / pieces
    total = np.zeros(n)
    for _ in range(pieces):
        total += _tilted(alpha, mass, h, n, rng)
    return total


# ---------------------------------------------------------------- custom Levy pair

def _moment(spec: BernsteinSpec, k: int, lo: float, hi: float) -> float:
    """int_lo^hi y^k nu(y) dy by log-variable quadrature."""
    if hi <= lo:
        return 0.0

    def f(s):
        y = math.exp(s)
        return y ** (k + 1) * float(bs.levy_density(spec, y))

    edges = np.linspace(math.log(lo), math.log(hi), max(2, int(math.log(hi / lo) / math.log(10)) + 2))
    return math.fsum(integrate.quad(f, a, b, limit=200, epsrel=1e-10, epsabs=0)[0]
                     for a, b in zip(edges[:-1], edges[1:]))


def _small_moment(spec: BernsteinSpec, k: int, eps: float, floor: float = 1e-15) -> float:
    """int_0^eps y^k nu(y) dy, continuing nu below ``floor`` by its power law."""
    head = _moment(spec, k, floor, eps) if eps > floor else 0.0
    slope = bs._local_slope(lambda y: bs.levy_density(spec, y), floor)
    if math.isfinite(slope):
        if slope + k + 1 <= 0:
            return math.inf
        head += floor ** (k + 1) * float(bs.levy_density(spec, floor)) / (slope + k + 1)
    return head


@lru_cache(maxsize=128)
def choose_epsilon(spec: BernsteinSpec, t: float) -> float:
    """Largest cut-off with int_0^eps y^2 nu(dy) below SMALL_JUMP_TOL * t."""
    target = SMALL_JUMP_TOL * t

    def g(le):
        return math.log(_small_moment(spec, 2, math.exp(le))) - math.log(target)

    lo, hi = math.log(1e-14), math.log(1e6)
    if g(hi) < 0:
        return math.exp(hi)
    if g(lo) > 0:
        raise ResourceError("no jump cut-off meets the small-jump tolerance above 1e-14")
    return math.exp(optimize.brentq(g, lo, hi, xtol=1e-6))


@dataclass(frozen=True)
class _JumpTable:
    eps: float
    rate: float           # int_eps^inf nu
    drift: float          # int_0^eps y nu
    log_y: np.ndarray
    log_tail: np.ndarray  # log int_y^inf nu on log_y
    tail_slope: float     # power of the tail beyond the last node


@lru_cache(maxsize=64)
def _jump_table(spec: BernsteinSpec, eps: float) -> _JumpTable:
    top = 1e15
    ys = np.geomspace(eps, top, 600)
    dens = lambda y: bs.levy_density(spec, y)  # noqa: E731
    slope = bs._local_slope(dens, top)
    beyond = 0.0
    if math.isfinite(slope):
        if slope >= -1:
            raise ResourceError("Levy tail too heavy for compound-Poisson sampling")
        beyond = top * float(dens(top)) / (-slope - 1)
    # tail integral from each node to the top, accumulated right to left
    pieces = np.array([_moment(spec, 0, a, b) for a, b in zip(ys[:-1], ys[1:])])
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]]) + beyond
    keep = tail > 0
    drift = _small_moment(spec, 1, eps)
    return _JumpTable(eps, float(tail[0]), drift, np.log(ys[keep]), np.log(tail[keep]),
                      slope + 1 if math.isfinite(slope) else -math.inf)


def _sample_jumps(tab: _JumpTable, k: int, rng: np.random.Generator) -> np.ndarray:
    # invert the tail function: a jump Y satisfies T(Y) = U * T(eps)
    lt = math.log(tab.rate) + np.log(rng.random(k))
    # np.interp needs increasing abscissae
    xs, ys = tab.log_tail[::-1], tab.log_y[::-1]
    out = np.interp(lt, xs, ys)
    below = lt < xs[0]
    if np.any(below) and math.isfinite(tab.tail_slope):
        out[below] = ys[0] + (lt[below] - xs[0]) / tab.tail_slope
    return np.exp(out)


def custom_increments(sampler: SubordinatorSampler, t: float, n: int, rng: np.random.Generator):
    spec = sampler.spec
    cont = np.full(n, spec.drift * t)
    if not spec.table_y:
        return cont, np.zeros(n)
    eps = sampler.epsilon if sampler.epsilon is not None else choose_epsilon(spec, t)
    tab = _jump_table(spec, float(eps))
    expected = tab.rate * t * n
    if expected > JUMP_BUDGET:
        raise ResourceError(f"cut-off eps={eps:.3e} implies {expected:.3e} expected jumps "
                            f"(budget {JUMP_BUDGET:.1e}); raise eps or lower the path count")
    counts = rng.poisson(tab.rate * t, n)
    total = int(counts.sum())
    jumps = np.zeros(n)
    if total:
        sizes = _sample_jumps(tab, total, rng)
        owner = np.repeat(np.arange(n), counts)
        jumps = np.bincount(owner, weights=sizes, minlength=n)
    # small jumps are replaced by their mean
    return cont, jumps + tab.drift * t


# ---------------------------------------------------------------- dispatch

def _split(sampler: SubordinatorSampler, t: float, n: int, rng: np.random.Generator):
    spec = sampler.spec
    k = spec.kind
    if k is Kind.LINEAR:
        return np.full(n, t), np.zeros(n)
    if k is Kind.STABLE:
        if spec.alpha == 2:
            return np.full(n, t), np.zeros(n)
        return np.zeros(n), stable_increments(spec.alpha, t, n, rng)
    if k is Kind.STABLE_SUM:
        cont = np.zeros(n)
        jump = np.zeros(n)
        for a in (spec.alpha, spec.beta):
            if a == 2:
                cont += t
            else:
                jump += stable_increments(a, t, n, rng)
        return cont, jump
    if k is Kind.RELATIVISTIC:
        return np.zeros(n), relativistic_increments(spec.alpha, spec.mass, t, n, rng)
    if k is Kind.CUSTOM:
        return custom_increments(sampler, t, n, rng)
    raise UnsupportedError(f"no subordinator sampler for {k.value}")


def sample_increment(sampler: SubordinatorSampler, t: float, rng: np.random.Generator | None = None) -> float:
    """One draw of S_t."""
    rng = block_rng(sampler.seed, sampler.stream, 0) if rng is None else rng
    return float(sampler.increments(t, 1, rng)[0])


def sample_many(sampler: SubordinatorSampler, t: float, n: int, workers: int | None = None) -> np.ndarray:
    """``n`` draws of S_t, reproducible across worker counts."""
    parts = map_blocks(lambda b, m: sampler.increments(t, m, block_rng(sampler.seed, sampler.stream, b)),
                       n, workers)
    return np.concatenate(parts)


@dataclass(frozen=True)
class LaplaceCheck:
    u: float
    t: float
    estimate: McEstimate
    target: float
    z_score: float


def verify_laplace(sampler: SubordinatorSampler, u: float, t: float, n: int,
                   workers: int | None = None, ci_level: float = 0.95) -> LaplaceCheck:
    """Compare the sample mean of exp(-u S_t) with exp(-t Psi(u))."""
    if n < 1000:
        raise ArgumentError("verify_laplace needs n >= 1000")
    if not (u > 0 and t > 0):
        raise ArgumentError("u and t must be positive")
    s = sample_many(sampler, t, n, workers)
    est = McEstimate.from_samples(np.exp(-u * s), ci_level)
    target = math.exp(-t * bs.evaluate(sampler.spec, u))
    return LaplaceCheck(float(u), float(t), est, target, est.z_score(target))


def verify_laplace_grid(sampler: SubordinatorSampler, u_grid, t_grid, n: int,
                        workers: int | None = None, ci_level: float = 0.95) -> list[LaplaceCheck]:
    """Laplace checks on a (u, t) grid; one sample set per ``t`` serves every ``u``."""
    if n < 1000:
        raise ArgumentError("verify_laplace needs n >= 1000")
    out = []
    for j, t in enumerate(t_grid):
        view = SubordinatorSampler(sampler.spec, sampler.method, sampler.epsilon, sampler.seed,
                                   sampler.stream + j)
        s = sample_many(view, float(t), n, workers)
        for u in u_grid:
            est = McEstimate.from_samples(np.exp(-float(u) * s), ci_level)
            target = math.exp(-float(t) * bs.evaluate(sampler.spec, float(u)))
            out.append(LaplaceCheck(float(u), float(t), est, target, est.z_score(target)))
    return out


def measure_acceptance(sampler: SubordinatorSampler, t: float, n: int,
                       rng: np.random.Generator | None = None) -> McEstimate:
    """Empirical acceptance rate of one tilting round over an interval of length ``t``."""
    spec = sampler.spec
    if spec.kind is not Kind.RELATIVISTIC:
        raise UnsupportedError("acceptance is defined for the rejection sampler only")
    rng = block_rng(sampler.seed, sampler.stream, 0) if rng is None else rng
    a = spec.alpha / 2
    s = stable_increments(spec.alpha, t, n, rng)
    ok = rng.random(n) < np.exp(-spec.mass ** (1 / a) * s)
    return McEstimate.from_samples(ok.astype(float))
