"""Monte Carlo estimate record carried by every stochastic result."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    ci_level: float = 0.95
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not (self.stderr >= 0) and not math.isnan(self.stderr):
            raise ValueError("stderr must be non-negative")
        if not (0 < self.ci_level < 1):
            raise ValueError("ci_level must lie in (0, 1)")

    @classmethod
    def from_samples(cls, x, ci_level: float = 0.95, flags: tuple[str, ...] = ()) -> "McEstimate":
        x = np.asarray(x, dtype=float).ravel()
        n = x.size
        if n == 0:
            return cls(math.nan, math.nan, 0, ci_level, flags)
        mean = float(np.mean(x))
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(mean, se, int(n), ci_level, tuple(flags))

    @property
    def z_crit(self) -> float:
        return float(norm.ppf(0.5 + self.ci_level / 2))

    @property
    def half_width(self) -> float:
        return self.z_crit * self.stderr

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - self.half_width, self.mean + self.half_width

    def z_score(self, target: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == target else math.copysign(math.inf, self.mean - target)
        return (self.mean - target) / self.stderr

    def scaled(self, c: float) -> "McEstimate":
        return McEstimate(self.mean * c, self.stderr * abs(c), self.n_paths, self.ci_level, self.flags)

    def with_flags(self, *flags: str) -> "McEstimate":
        return McEstimate(self.mean, self.stderr, self.n_paths, self.ci_level, self.flags + tuple(flags))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n_paths,
                "ci_level": self.ci_level, "flags": list(self.flags)}


def difference(a: McEstimate, b: McEstimate, correlated_stderr: float | None = None) -> McEstimate:
    """a - b; independent errors unless a paired stderr is supplied."""
    se = math.hypot(a.stderr, b.stderr) if correlated_stderr is None else correlated_stderr
    return McEstimate(a.mean - b.mean, se, min(a.n_paths, b.n_paths), a.ci_level)
