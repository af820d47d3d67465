"""Uniform grid on the truncated half-line [0, y_max] and its discrete calculus.

Array-level kernels live on Grid (d1, d2, cumulative, integrate) so the
solver's hot loop can skip Field construction; the module-level functions
take and return Field.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

logger = logging.getLogger(__name__)

MIN_INTERVALS = 16
TRUNCATION_RATIO = 1e-10


class TruncationWarning(UserWarning):
    """An integrand is not negligible at y_max."""


@dataclass(frozen=True)
class Grid:
    """Uniform nodes y_i = i*h, i = 0..n, with h = y_max/n."""
    y_max: float
    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise ValueError(f"n must be an integer, got {self.n!r}")
        if not math.isfinite(self.y_max) or self.y_max <= 0:
            raise ValueError(f"y_max must be positive and finite, got {self.y_max}")
        if self.n < MIN_INTERVALS:
            raise ValueError(f"n must be >= {MIN_INTERVALS}, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.y_max / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        y = np.arange(self.n + 1, dtype=float) * self.h
        y[-1] = self.y_max
        y.setflags(write=False)
        return y

    def __len__(self) -> int:
        return self.n + 1

    # -- array kernels ---------------------------------------------------------

    def d1(self, values: np.ndarray) -> np.ndarray:
        """Centered first derivative, second-order one-sided at the ends."""
        return np.gradient(values, self.h, edge_order=2)

    def d2(self, values: np.ndarray) -> np.ndarray:
        """Three-point second derivative; four-point one-sided at the ends."""
        u = np.asarray(values, dtype=float)
        out = np.empty_like(u)
        inv_h2 = 1.0 / (self.h * self.h)
        out[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) * inv_h2
        out[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) * inv_h2
        out[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) * inv_h2
        return out

    def cumulative(self, values: np.ndarray) -> np.ndarray:
        """Running integral from 0 by the trapezoid rule; first entry is 0."""
        return cumulative_trapezoid(values, dx=self.h, initial=0.0)

    def integrate(self, values: np.ndarray) -> float:
        return float(trapezoid(values, dx=self.h))

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return Field(self, np.broadcast_to(func(self.nodes), self.nodes.shape))


@dataclass(frozen=True, eq=False)
class Field:
    """Node values on a grid; immutable once built."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n + 1,):
            raise ValueError(f"field needs {self.grid.n + 1} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.n + 1, float(value)))


def make_grid(y_max: float, n: int) -> Grid:
    grid = Grid(float(y_max), n)
    logger.debug("grid y_max=%g n=%d h=%g", grid.y_max, grid.n, grid.h)
    return grid


def second_derivative(u: Field) -> Field:
    return Field(u.grid, u.grid.d2(u.values))


def first_derivative(u: Field) -> Field:
    return Field(u.grid, u.grid.d1(u.values))


def antiderivative(u: Field) -> Field:
    return Field(u.grid, u.grid.cumulative(u.values))


def quadrature(u: Field, v: Field) -> float:
    """Trapezoid approximation of the integral of u*v over [0, y_max]."""
    if u.grid != v.grid:
        raise ValueError(f"grid mismatch: {u.grid} vs {v.grid}")
    return u.grid.integrate(u.values * v.values)


def check_truncation(integrand: np.ndarray, label: str) -> bool:
    """Warn when the integrand at y_max exceeds 1e-10 of its maximum.

    Returns True when the truncation is acceptable.
    """
    scale = float(np.max(np.abs(integrand))) if len(integrand) else 0.0
    tail = abs(float(integrand[-1]))
    if scale > 0 and tail > TRUNCATION_RATIO * scale:
        # fixed message so the warnings filter reports each label once
        warnings.warn(f"{label}: integrand is not negligible at y_max", TruncationWarning, stacklevel=2)
        logger.debug("%s: integrand at y_max %.3e, scale %.3e", label, tail, scale)
        return False
    return True
