"""Subordinate Brownian motion X_t = B_{S_t}: domains, path simulation, exits and hits.

Brownian motion here has E[B_t^2] = 2t per coordinate (generator = Laplacian).
Paths live on a uniform time grid.  Jumps are resolved at grid times; the
continuous (drift) part of the subordinator additionally gets a Brownian-bridge
crossing test in every step, so continuous exits between grid points are not
lost.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Sequence

import numpy as np

from . import bernstein as bs
from .bernstein import BernsteinSpec
from .config import DT_FRACTION, TMAX_MULTIPLE, SolverConfig
from .errors import ArgumentError
from .estimate import McEstimate
from .rng import block_rng, map_blocks
from .subordinator import SubordinatorSampler, make_sampler

__all__ = [
    "Domain", "Interval", "Ball", "Box", "Annulus", "make_domain", "McEstimate",
    "Stop", "PathBatch", "ExitRecord", "HitRecord", "simulate", "first_exit",
    "first_hit_ball", "step_paths", "exit_moment", "moment_chain", "resolve_steps", "dump_paths",
]


# ============================================================== domains


class Domain:
    """Bounded open region in R^d.

    Subclasses supply ``contains``, ``signed_distance`` (positive inside),
    ``face_distances`` (distance to each smooth boundary piece, for points
    inside) and ``project`` (closest point on a given boundary piece).
    """

    kind: str = "domain"
    convex: bool = True

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def diam(self) -> float:
        raise NotImplementedError

    @property
    def inrad(self) -> float:
        raise NotImplementedError

    @property
    def center(self) -> np.ndarray:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) > 0

    def signed_distance(self, x) -> np.ndarray:
        raise NotImplementedError

    def face_distances(self, x) -> np.ndarray:
        raise NotImplementedError

    def project(self, x: np.ndarray, face: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def expanded(self, margin: float) -> "Domain":
        raise NotImplementedError

    def contains_closed_ball(self, center, radius: float) -> bool:
        c = np.atleast_2d(np.asarray(center, dtype=float))
        return bool(self.signed_distance(c)[0] > radius)

    def line_grid(self, n: int) -> np.ndarray:
        """``n`` interior points on the segment through the center along the first axis."""
        lo, hi = self.bounding_box()
        c = self.center
        s = np.linspace(lo[0], hi[0], n + 2)[1:-1]
        pts = np.tile(c, (n, 1))
        pts[:, 0] = s
        return pts[self.contains(pts)]

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _pts(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1, 1)
        elif x.ndim == 1:
            x = x.reshape(-1, 1) if self.dim == 1 else x.reshape(1, -1)
        if x.shape[1] != self.dim:
            raise ArgumentError(f"points of dimension {x.shape[1]} for a {self.dim}-d domain")
        return x


@dataclass(frozen=True)
class Interval(Domain):
    lo: float
    hi: float
    kind: str = field(default="interval", init=False)

    def __post_init__(self):
        if not (self.hi > self.lo):
            raise ArgumentError("interval needs lo < hi")

    dim = property(lambda self: 1)
    diam = property(lambda self: self.hi - self.lo)
    inrad = property(lambda self: (self.hi - self.lo) / 2)
    center = property(lambda self: np.array([(self.lo + self.hi) / 2]))
    volume = property(lambda self: self.hi - self.lo)

    def bounding_box(self):
        return np.array([self.lo]), np.array([self.hi])

    def signed_distance(self, x):
        x = self._pts(x)[:, 0]
        return np.minimum(x - self.lo, self.hi - x)

    def face_distances(self, x):
        x = self._pts(x)[:, 0]
        return np.stack([x - self.lo, self.hi - x], axis=1)

    def project(self, x, face):
        out = self._pts(x).copy()
        out[:, 0] = np.where(face == 0, self.lo, self.hi)
        return out

    def expanded(self, margin):
        return Interval(self.lo - margin, self.hi + margin)

    def to_dict(self):
        return {"kind": "interval", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Ball(Domain):
    center_: tuple[float, ...]
    radius: float
    kind: str = field(default="ball", init=False)

    def __post_init__(self):
        if not (self.radius > 0):
            raise ArgumentError("ball radius must be positive")
        if len(self.center_) < 1:
            raise ArgumentError("ball center must have at least one coordinate")

    dim = property(lambda self: len(self.center_))
    diam = property(lambda self: 2 * self.radius)
    inrad = property(lambda self: self.radius)
    center = property(lambda self: np.asarray(self.center_, dtype=float))

    @property
    def volume(self) -> float:
        d = self.dim
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius ** d

    def bounding_box(self):
        c = self.center
        return c - self.radius, c + self.radius

    def signed_distance(self, x):
        return self.radius - np.linalg.norm(self._pts(x) - self.center, axis=1)

    def face_distances(self, x):
        return self.signed_distance(x)[:, None]

    def project(self, x, face):
        x = self._pts(x)
        v = x - self.center
        nrm = np.linalg.norm(v, axis=1, keepdims=True)
        # the center has no closest boundary point; any direction will do
        flat = nrm[:, 0] == 0
        v[flat, 0] = 1.0
        nrm[flat] = 1.0
        return self.center + self.radius * v / nrm

    def expanded(self, margin):
        return Ball(self.center_, self.radius + margin)

    def outside_distance(self, x):
        """Distance from points outside the ball to its sphere."""
        return np.linalg.norm(self._pts(x) - self.center, axis=1) - self.radius

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center_), "radius": self.radius}


@dataclass(frozen=True)
class Box(Domain):
    lo_: tuple[float, ...]
    hi_: tuple[float, ...]
    kind: str = field(default="box", init=False)

    def __post_init__(self):
        if len(self.lo_) != len(self.hi_) or not self.lo_:
            raise ArgumentError("box corners must have equal positive dimension")
        if any(h <= l for l, h in zip(self.lo_, self.hi_)):
            raise ArgumentError("box needs lo < hi in every coordinate")

    dim = property(lambda self: len(self.lo_))
    lo = property(lambda self: np.asarray(self.lo_, dtype=float))
    hi = property(lambda self: np.asarray(self.hi_, dtype=float))
    diam = property(lambda self: float(np.linalg.norm(self.hi - self.lo)))
    inrad = property(lambda self: float(np.min(self.hi - self.lo) / 2))
    center = property(lambda self: (self.lo + self.hi) / 2)
    volume = property(lambda self: float(np.prod(self.hi - self.lo)))

    def bounding_box(self):
        return self.lo, self.hi

    def signed_distance(self, x):
        return self.face_distances(x).min(axis=1)

    def face_distances(self, x):
        x = self._pts(x)
        return np.concatenate([x - self.lo, self.hi - x], axis=1)

    def project(self, x, face):
        out = self._pts(x).copy()
        d = self.dim
        rows = np.arange(out.shape[0])
        axis = face % d
        out[rows, axis] = np.where(face < d, self.lo[axis], self.hi[axis])
        return out

    def expanded(self, margin):
        return Box(tuple(self.lo - margin), tuple(self.hi + margin))

    def to_dict(self):
        return {"kind": "box", "lo": list(self.lo_), "hi": list(self.hi_)}


@dataclass(frozen=True)
class Annulus(Domain):
    center_: tuple[float, ...]
    r_in: float
    r_out: float
    kind: str = field(default="annulus", init=False)
    convex = False

    def __post_init__(self):
        if not (0 < self.r_in < self.r_out):
            raise ArgumentError("annulus needs 0 < r_in < r_out")
        if len(self.center_) < 2:
            raise ArgumentError("annulus needs dimension >= 2")

    dim = property(lambda self: len(self.center_))
    diam = property(lambda self: 2 * self.r_out)
    inrad = property(lambda self: (self.r_out - self.r_in) / 2)
    center = property(lambda self: np.asarray(self.center_, dtype=float))

    @property
    def volume(self) -> float:
        d = self.dim
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * (self.r_out ** d - self.r_in ** d)

    def bounding_box(self):
        c = self.center
        return c - self.r_out, c + self.r_out

    def signed_distance(self, x):
        return self.face_distances(x).min(axis=1)

    def face_distances(self, x):
        r = np.linalg.norm(self._pts(x) - self.center, axis=1)
        return np.stack([r - self.r_in, self.r_out - r], axis=1)

    def project(self, x, face):
        x = self._pts(x)
        v = x - self.center
        nrm = np.linalg.norm(v, axis=1, keepdims=True)
        # the center has no closest boundary point; any direction will do
        flat = nrm[:, 0] == 0
        v[flat, 0] = 1.0
        nrm[flat] = 1.0
        rad = np.where(face == 0, self.r_in, self.r_out)[:, None]
        return self.center + rad * v / nrm

    def line_grid(self, n):
        c = self.center
        s = np.linspace(self.r_in, self.r_out, n + 2)[1:-1]
        pts = np.tile(c, (n, 1))
        pts[:, 0] += s
        return pts

    def expanded(self, margin):
        return Annulus(self.center_, max(self.r_in - margin, 1e-12), self.r_out + margin)

    def to_dict(self):
        return {"kind": "annulus", "center": list(self.center_), "r_in": self.r_in, "r_out": self.r_out}


def make_domain(kind: str, **params) -> Domain:
    """Build a domain from its kind and geometry parameters."""
    kind = kind.lower()
    try:
        if kind == "interval":
            return Interval(float(params.pop("lo")), float(params.pop("hi")))
        if kind == "ball":
            c = params.pop("center", None)
            d = params.pop("d", None)
            if c is None:
                c = [0.0] * int(d if d is not None else 1)
            c = tuple(float(v) for v in np.atleast_1d(c))
            if d is not None and int(d) != len(c):
                raise ArgumentError("ball center dimension disagrees with d")
            return Ball(c, float(params.pop("radius")))
        if kind == "box":
            return Box(tuple(float(v) for v in params.pop("lo")), tuple(float(v) for v in params.pop("hi")))
        if kind == "annulus":
            c = tuple(float(v) for v in params.pop("center"))
            return Annulus(c, float(params.pop("r_in")), float(params.pop("r_out")))
    except KeyError as exc:
        raise ArgumentError(f"missing geometry parameter {exc} for {kind}") from None
    finally:
        if params:
            raise ArgumentError(f"unknown geometry parameters {sorted(params)} for {kind}")
    raise ArgumentError(f"unknown domain kind {kind!r}")


def domain_from_dict(data: dict) -> Domain:
    data = dict(data)
    kind = data.pop("kind")
    if kind == "ball" and "center" not in data:
        data["center"] = [0.0]
    return make_domain(kind, **data)


# ============================================================== path kernel


class Stop(IntEnum):
    EXIT = 0
    HIT = 1
    HORIZON = 2
    CENSORED = 3


@dataclass
class PathBatch:
    """Per-path outcome of :func:`simulate`; all arrays have one row per path."""

    tau: np.ndarray
    position: np.ndarray
    reason: np.ndarray
    by_jump: np.ndarray
    bridged: np.ndarray
    int_v: np.ndarray
    integral: np.ndarray
    s_total: np.ndarray
    dt: float
    t_stop: float
    records: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.tau.size

    @property
    def weight(self) -> np.ndarray:
        """exp(-int_0^stop V(X_s) ds)."""
        return np.exp(-self.int_v)

    def fraction(self, reason: Stop) -> float:
        return float(np.mean(self.reason == reason))


def resolve_steps(spec: BernsteinSpec, domain: Domain, cfg: SolverConfig) -> tuple[float, float]:
    """Concrete (dt, T_max) for a configuration, filling the scale-based defaults."""
    dt = cfg.dt if cfg.dt is not None else DT_FRACTION / bs.evaluate(spec, domain.inrad ** -2)
    t_max = cfg.t_max if cfg.t_max is not None else TMAX_MULTIPLE / bs.evaluate(spec, domain.diam ** -2)
    return float(dt), float(t_max)


TimeField = Callable[[float, np.ndarray], np.ndarray]


def _as_sampler(spec_or_sampler, cfg: SolverConfig) -> SubordinatorSampler:
    if isinstance(spec_or_sampler, SubordinatorSampler):
        return spec_or_sampler
    return make_sampler(spec_or_sampler, seed=cfg.seed)


def _crossing(d1: np.ndarray, d2: np.ndarray, ds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bridge crossing probability for variance-2 Brownian motion over subordinated time ``ds``.

    ``d1``/``d2`` hold distances of the step's end points to each boundary
    piece (shape (m, k)).  Returns the combined probability and the most
    likely piece.
    """
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        p = np.exp(-np.maximum(d1, 0) * np.maximum(d2, 0) / ds[:, None])
    p = np.where(ds[:, None] > 0, p, 0.0)
    total = 1.0 - np.prod(1.0 - p, axis=1)
    return total, np.argmax(p, axis=1)


def step_paths(sampler: SubordinatorSampler, domain: Domain, xa: np.ndarray, h: float,
               rng: np.random.Generator, bridge: bool):
    """Advance positions ``xa`` by one time step of length ``h``.

    Returns ``(x_new, exited, exited_by_jump, exited_by_bridge, ds_cont, ds_jump)``.
    Bridge exits are projected onto the most likely boundary piece.
    """
    k, d = xa.shape
    dc, dj = sampler.split(h, k, rng)
    drift, jumps = sampler.drift > 0, sampler.has_jumps
    xc = xa + np.sqrt(2 * dc)[:, None] * rng.standard_normal((k, d)) if drift else xa
    xn = xc + np.sqrt(2 * dj)[:, None] * rng.standard_normal((k, d)) if jumps else xc.copy()
    out = ~domain.contains(xn)
    if jumps and drift:
        jexit = out & domain.contains(xc)
    else:
        jexit = out.copy() if jumps else np.zeros(k, bool)
    bexit = np.zeros(k, bool)
    if bridge:
        u = rng.random(k)
        inside = ~out
        if np.any(inside):
            p, face = _crossing(domain.face_distances(xa[inside]), domain.face_distances(xn[inside]), dc[inside])
            sel = u[inside] < p
            idx = np.flatnonzero(inside)[sel]
            bexit[idx] = True
            xn[idx] = domain.project(xn[idx], face[sel])
    return xn, out | bexit, jexit, bexit, dc, dj


def simulate(
    spec_or_sampler,
    domain: Domain,
    x0,
    cfg: SolverConfig,
    *,
    n: int | None = None,
    horizon: float | None = None,
    potential: TimeField | None = None,
    source: TimeField | None = None,
    target: Ball | None = None,
    t0: float = 0.0,
    stream: int = 0,
    record: int = 0,
    spec: BernsteinSpec | None = None,
) -> PathBatch:
    """Run ``n`` paths from ``x0`` until exit from ``domain``, a hit of ``target`` or the horizon.

    ``potential(t, x)`` is accumulated into ``int_v`` and ``source(t, x)`` into
    ``integral = sum exp(-int_v) f dt``, both by the left-endpoint rule.  With
    no horizon, paths still alive at T_max are marked CENSORED.  Paths of the
    same ``(cfg.seed, stream)`` share random numbers, which gives common random
    numbers across calls.
    """
    sampler = _as_sampler(spec_or_sampler, cfg)
    spec = sampler.spec if spec is None else spec
    n = cfg.n_paths if n is None else int(n)
    dt, t_max = resolve_steps(spec, domain, cfg)
    t_stop = t_max if horizon is None else float(horizon)
    if t_stop < 0:
        raise ArgumentError("horizon must be non-negative")
    d = domain.dim
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim <= 1:
        x0 = domain._pts(x0)
        if x0.shape[0] != 1:
            raise ArgumentError("x0 must be one point or an (n, d) array")
        starts = None
    else:
        starts = domain._pts(x0)
        if starts.shape[0] != n:
            raise ArgumentError("per-path starts must have n rows")
    if not np.all(domain.contains(x0 if starts is None else starts)):
        raise ArgumentError("starting point must lie in the open domain")
    if target is not None:
        c = np.atleast_2d(x0 if starts is None else starts)
        if np.any(target.outside_distance(c) <= 0):
            raise ArgumentError("starting point must lie outside the closed target ball")

    bridge = bool(cfg.bridge_correction and sampler.drift > 0)
    n_steps = int(math.ceil(t_stop / dt - 1e-9)) if t_stop > 0 else 0

    def run_block(b: int, m: int):
        rng = block_rng(cfg.seed, stream, b)
        first = b * _block_size()
        pos = np.repeat(x0, m, axis=0) if starts is None else starts[first:first + m].copy()
        tau = np.full(m, t_stop)
        reason = np.full(m, Stop.HORIZON if horizon is not None else Stop.CENSORED, dtype=np.int8)
        by_jump = np.zeros(m, bool)
        bridged = np.zeros(m, bool)
        int_v = np.zeros(m)
        integral = np.zeros(m)
        s_tot = np.zeros(m)
        alive = np.arange(m)
        rec_ids = np.arange(min(record, m)) if (record and b == 0) else np.empty(0, int)
        rows: list = []
        if rec_ids.size:
            for i in rec_ids:
                rows.append((int(i), 0.0, 0.0, *pos[i].tolist(), "start"))
        t = 0.0
        for j in range(n_steps):
            if alive.size == 0:
                break
            t_next = min((j + 1) * dt, t_stop)
            h = t_next - t
            k = alive.size
            xa = pos[alive]
            if source is not None:
                integral[alive] += np.exp(-int_v[alive]) * source(t0 + t, xa) * h
            if potential is not None:
                int_v[alive] += potential(t0 + t, xa) * h
            xn, stopped_exit, jexit, bexit, dc, dj = step_paths(sampler, domain, xa, h, rng, bridge)
            s_tot[alive] += dc + dj
            t = t_next
            hit = np.zeros(k, bool)
            hbridge = np.zeros(k, bool)
            if target is not None:
                free = ~stopped_exit
                hit[free] = target.outside_distance(xn[free]) < 0
                if bridge:
                    u2 = rng.random(k)
                    cand = free & ~hit
                    if np.any(cand):
                        p, _ = _crossing(target.outside_distance(xa[cand])[:, None],
                                         target.outside_distance(xn[cand])[:, None], dc[cand])
                        sel = u2[cand] < p
                        idx = np.flatnonzero(cand)[sel]
                        hit[idx] = True
                        hbridge[idx] = True
                        xn[idx] = target.project(xn[idx], np.zeros(idx.size, int))
            pos[alive] = xn
            done = stopped_exit | hit
            if rec_ids.size:
                for li in np.flatnonzero(np.isin(alive, rec_ids)):
                    ev = ("jump_exit" if jexit[li] else "bridge_exit" if bexit[li] else "exit") if stopped_exit[li] \
                        else ("hit" if hit[li] else "")
                    gi = alive[li]
                    rows.append((int(gi), t, float(s_tot[gi]), *xn[li].tolist(), ev))
            if np.any(done):
                ids = alive[done]
                tau[ids] = t
                reason[ids] = np.where(hit[done], Stop.HIT, Stop.EXIT)
                by_jump[ids] = jexit[done]
                bridged[ids] = bexit[done] | hbridge[done]
                alive = alive[~done]
        if rec_ids.size:
            for gi in np.intersect1d(alive, rec_ids):
                rows.append((int(gi), t, float(s_tot[gi]), *pos[gi].tolist(),
                             "horizon" if horizon is not None else "censored"))
        return tau, pos, reason, by_jump, bridged, int_v, integral, s_tot, rows

    parts = map_blocks(run_block, n, cfg.workers)
    cat = lambda i: np.concatenate([p[i] for p in parts]) if parts else np.empty(0)  # noqa: E731
    records = [r for p in parts for r in p[8]]
    return PathBatch(cat(0), np.concatenate([p[1] for p in parts]) if parts else np.empty((0, d)),
                     cat(2), cat(3), cat(4), cat(5), cat(6), cat(7), dt, t_stop, records)


def _block_size() -> int:
    from .rng import BLOCK_SIZE
    return BLOCK_SIZE


def dump_paths(records: Sequence[tuple], path, dim: int) -> None:
    """Write recorded path rows as RFC-4180 CSV (path, t, S, x0.., event)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["path", "t", "S"] + [f"x{i}" for i in range(dim)] + ["event"])
        for row in sorted(records, key=lambda r: (r[0], r[1])):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:-1]] + [row[-1]])


# ============================================================== records and estimators


@dataclass(frozen=True)
class ExitRecord:
    tau: np.ndarray
    exit_position: np.ndarray
    exited_by_jump: np.ndarray
    bridge_corrected: np.ndarray
    censored: np.ndarray
    t_max: float
    ci_level: float = 0.95

    def mean_tau(self) -> McEstimate:
        flags = ("censored>1%",) if self.censored_fraction > 0.01 else ()
        return McEstimate.from_samples(self.tau, self.ci_level, flags)

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.censored))


@dataclass(frozen=True)
class HitRecord:
    hit_before_exit: np.ndarray
    breve_tau: np.ndarray
    position: np.ndarray
    ci_level: float = 0.95

    def probability(self) -> McEstimate:
        return McEstimate.from_samples(self.hit_before_exit.astype(float), self.ci_level)


def _check_start(domain: Domain, x0) -> np.ndarray:
    x = domain._pts(x0)
    if x.shape[0] != 1:
        raise ArgumentError("expected a single starting point")
    if not domain.contains(x)[0]:
        raise ArgumentError("starting point must lie in the open domain")
    return x[0]


def first_exit(spec, x0, domain: Domain, cfg: SolverConfig, stream: int = 0, record: int = 0) -> ExitRecord:
    """First exit time from ``domain`` of ``cfg.n_paths`` paths started at ``x0``."""
    x = _check_start(domain, x0)
    b = simulate(spec, domain, x, cfg, stream=stream, record=record)
    rec = ExitRecord(b.tau, b.position, b.by_jump, b.bridged, b.reason == Stop.CENSORED, b.t_stop, cfg.ci_level)
    if record:
        object.__setattr__(rec, "_records", b.records)
    return rec


def first_hit_ball(spec, x0, ball: Ball, domain: Domain, cfg: SolverConfig, stream: int = 0) -> HitRecord:
    """Race the entrance time of ``ball`` against the exit time of ``domain``."""
    if ball.dim != domain.dim:
        raise ArgumentError("ball and domain dimensions differ")
    if not domain.contains_closed_ball(ball.center, ball.radius):
        raise ArgumentError("ball must be compactly contained in the domain")
    x = _check_start(domain, x0)
    if ball.outside_distance(x[None, :])[0] <= 0:
        raise ArgumentError("starting point must lie outside the closed ball")
    b = simulate(spec, domain, x, cfg, target=ball, stream=stream)
    return HitRecord(b.reason == Stop.HIT, b.tau, b.position, cfg.ci_level)


MAX_MOMENT = 4


def exit_moment(spec, domain: Domain, x, k: int, cfg: SolverConfig, stream: int = 0) -> McEstimate:
    """E^x[tau_D^k] for k <= 4."""
    if int(k) != k or not (1 <= k <= MAX_MOMENT):
        raise ArgumentError(f"moment order must be an integer in [1, {MAX_MOMENT}]")
    rec = first_exit(spec, x, domain, cfg, stream=stream)
    flags = ("censored>1%",) if rec.censored_fraction > 0.01 else ()
    return McEstimate.from_samples(rec.tau ** int(k), cfg.ci_level, flags)


@dataclass(frozen=True)
class MomentChain:
    """Sampled moments against k! (sup E tau)^k on an interior grid."""

    ks: tuple[int, ...]
    grid: np.ndarray
    mean_tau: tuple[McEstimate, ...]
    moments: dict
    bound_grid: dict
    bound_center: dict
    passed: bool
    detail: dict


GRID_POINTS = 17


def moment_chain(spec, domain: Domain, ks=(2, 3), cfg: SolverConfig | None = None,
                 n_grid: int = GRID_POINTS, z: float = 3.0, stream: int = 0) -> MomentChain:
    """Check sup_x E^x[tau^k] <= k! (sup_x E^x[tau])^k on an interior line grid.

    The sup is replaced by the max over ``n_grid`` points, which
    under-approximates it on both sides.  Slack: the moment's upper
    confidence limit is compared with the bound's lower one.
    """
    cfg = SolverConfig() if cfg is None else cfg
    grid = domain.line_grid(n_grid)
    ks = tuple(int(k) for k in ks)
    taus = []
    for i, x in enumerate(grid):
        taus.append(first_exit(spec, x, domain, cfg, stream=stream + i).tau)
    means = tuple(McEstimate.from_samples(t, cfg.ci_level) for t in taus)
    i_max = int(np.argmax([m.mean for m in means]))
    i_ctr = int(np.argmin(np.linalg.norm(grid - domain.center, axis=1)))
    sup = means[i_max]
    moments, bgrid, bctr, detail = {}, {}, {}, {}
    ok = True
    for k in ks:
        est = [McEstimate.from_samples(t ** k, cfg.ci_level) for t in taus]
        j = int(np.argmax([e.mean for e in est]))
        fk = math.factorial(k)
        bound = fk * sup.mean ** k
        # delta-method stderr of the bound
        bound_se = fk * k * sup.mean ** (k - 1) * sup.stderr
        moments[k] = est[j]
        bgrid[k] = bound
        bctr[k] = fk * means[i_ctr].mean ** k
        good = est[j].mean <= bound + z * math.hypot(est[j].stderr, bound_se)
        detail[k] = {"max_moment": est[j].mean, "max_moment_stderr": est[j].stderr, "at": grid[j].tolist(),
                     "bound": bound, "bound_stderr": bound_se, "bound_center": bctr[k]}
        ok = ok and bool(good)
    return MomentChain(ks, grid, means, moments, bgrid, bctr, ok, detail)
