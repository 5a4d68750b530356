"""Solver configuration shared by the Monte Carlo modules."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

from .errors import ArgumentError

# default step: this fraction of the time scale 1 / Psi(inrad^-2)
DT_FRACTION = 1e-3
# default horizon: this multiple of the time scale 1 / Psi(diam^-2)
TMAX_MULTIPLE = 50.0


@dataclass(frozen=True)
class SolverConfig:
    dt: float | None = None
    t_max: float | None = None
    n_paths: int = 10_000
    seed: int = 0
    ci_level: float = 0.95
    bridge_correction: bool = True
    workers: int | None = None

    def __post_init__(self):
        if self.dt is not None and not (self.dt > 0 and math.isfinite(self.dt)):
            raise ArgumentError("dt must be positive")
        if self.t_max is not None and not (self.t_max > 0):
            raise ArgumentError("t_max must be positive")
        if int(self.n_paths) != self.n_paths or self.n_paths < 100:
            raise ArgumentError("n_paths must be an integer >= 100")
        if self.seed < 0:
            raise ArgumentError("seed must be non-negative")
        if not (0 < self.ci_level < 1):
            raise ArgumentError("ci_level must lie in (0, 1)")
        if self.workers is not None and self.workers < 1:
            raise ArgumentError("workers must be >= 1")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)
