"""Monte Carlo and grid solvers for Schroedinger operators Psi(-Delta) + V driven by subordinate Brownian motion."""

__version__ = "0.1.0"

from . import bernstein, errors  # noqa: E402,F401
from .bernstein import BernsteinSpec, Kind, ScalingParams  # noqa: E402,F401
from .config import SolverConfig  # noqa: E402,F401
from .estimate import McEstimate  # noqa: E402,F401
