"""Heat lift phi(t, y), its derivatives, the forcing F and the linear operator L.

phi solves d_t phi - d_yy phi = kappa^2 on the half-line with phi(t, 0) = 0,
phi(t, inf) = kappa + kappa^2 t and phi(0, y) = kappa Erf(y/2). All closed
forms use <t> = t + 1 and the self-similar variable z = y / sqrt(4t), with
z = +inf at t = 0.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import special

from .grid import Field, Grid
from .models import LiftCheck, LiftParams, LiftReport

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)
FAR_FIELD_TOLERANCE = 1e-10


def erf(z):
    """Gauss error function (scipy.special.erf), scalar in, scalar out."""
    z_arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z_arr)):
        raise ValueError(f"erf argument must be finite, got {z!r}")
    out = special.erf(z_arr)
    return float(out) if out.ndim == 0 else out


def _check_args(t: float, y) -> np.ndarray:
    if not math.isfinite(t) or t < 0:
        raise ValueError(f"t must be finite and >= 0, got {t}")
    y_arr = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(y_arr)) or np.any(y_arr < 0):
        raise ValueError("y must be finite and >= 0")
    return y_arr


def _similarity(t: float, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Erf z, Erfc z, exp(-z^2)) with the t = 0 limit z = +inf."""
    if t == 0:
        ones = np.ones_like(y)
        return ones, np.zeros_like(y), np.zeros_like(y)
    z = y / (2.0 * math.sqrt(t))
    return special.erf(z), special.erfc(z), np.exp(-z * z)


def _out(values: np.ndarray):
    return float(values) if values.ndim == 0 else values


def phi(t: float, y, p: LiftParams):
    y = _check_args(t, y)
    k = p.kappa
    T = t + 1.0
    base = k * special.erf(y / (2.0 * math.sqrt(T)))
    if t == 0 or k == 0:
        return _out(base)
    erf_z, erfc_z, gauss = _similarity(t, y)
    second = -0.5 * y * y * erfc_z + t * erf_z + y * math.sqrt(t / math.pi) * gauss
    return _out(base + k * k * second)


def phi_y(t: float, y, p: LiftParams):
    y = _check_args(t, y)
    k = p.kappa
    T = t + 1.0
    base = k * np.exp(-y * y / (4.0 * T)) / math.sqrt(math.pi * T)
    if t == 0 or k == 0:
        return _out(base)
    _, erfc_z, gauss = _similarity(t, y)
    second = -y * erfc_z + 2.0 * math.sqrt(t / math.pi) * gauss
    return _out(base + k * k * second)


def phi_yy(t: float, y, p: LiftParams):
    y = _check_args(t, y)
    k = p.kappa
    T = t + 1.0
    base = -k * y * np.exp(-y * y / (4.0 * T)) / math.sqrt(4.0 * math.pi * T ** 3)
    if t == 0 or k == 0:
        return _out(base)
    _, erfc_z, _ = _similarity(t, y)
    return _out(base - k * k * erfc_z)


def phi_t(t: float, y, p: LiftParams):
    """Time derivative through the heat equation itself."""
    return _out(np.asarray(phi_yy(t, y, p)) + p.kappa ** 2)


def similarity_profile(z):
    """Bracket 2z^2(Erf z - 1) + Erf z + 2z e^{-z^2}/sqrt(pi); rises from 0 to 1."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be >= 0")
    with np.errstate(invalid="ignore"):
        values = -2.0 * z * z * special.erfc(z) + special.erf(z) + 2.0 * z * np.exp(-z * z) / SQRT_PI
    values = np.where(np.isinf(z), 1.0, values)
    return _out(values)


def heat_residual(t: float, p: LiftParams, grid: Grid, dt: float = 1e-4) -> float:
    """max_y |d_t phi - d_yy phi - kappa^2| with a centered difference in t."""
    if t <= 0:
        raise ValueError("heat_residual needs t > 0 (centered differencing in time)")
    if not 0 < dt < t:
        raise ValueError(f"dt must lie in (0, t), got dt={dt}, t={t}")
    y = grid.nodes
    dphi_dt = (phi(t + dt, y, p) - phi(t - dt, y, p)) / (2.0 * dt)
    return float(np.max(np.abs(dphi_dt - phi_yy(t, y, p) - p.kappa ** 2)))


@dataclass(frozen=True, eq=False)
class LiftProfile:
    """phi and the quantities built from it on one grid at one time."""
    t: float
    phi: np.ndarray
    phi_y: np.ndarray
    phi_yy: np.ndarray
    phi_int: np.ndarray  # running integral of phi from 0


def lift_profile(t: float, p: LiftParams, grid: Grid) -> LiftProfile:
    y = grid.nodes
    values = phi(t, y, p)
    return LiftProfile(
        t=t,
        phi=values,
        phi_y=phi_y(t, y, p),
        phi_yy=phi_yy(t, y, p),
        phi_int=grid.cumulative(values),
    )


def forcing_values(profile: LiftProfile) -> np.ndarray:
    return profile.phi * profile.phi - profile.phi_int * profile.phi_y


def linear_values(a: np.ndarray, profile: LiftProfile, grid: Grid) -> np.ndarray:
    return (
        -2.0 * a * profile.phi
        + profile.phi_int * grid.d1(a)
        + grid.cumulative(a) * profile.phi_y
    )


def forcing_F(t: float, p: LiftParams, grid: Grid) -> Field:
    """F = phi^2 - (antiderivative of phi) * d_y phi."""
    return Field(grid, forcing_values(lift_profile(t, p, grid)))


def linear_L(a: Field, t: float, p: LiftParams, require_origin_zero: bool = True) -> Field:
    """L[a] = -2 a phi + (int phi) d_y a + (int a) d_y phi."""
    if require_origin_zero and a.values[0] != 0:
        raise ValueError(f"linear_L needs a(0) = 0, got {a.values[0]}")
    return Field(a.grid, linear_values(a.values, lift_profile(t, p, a.grid), a.grid))


class _Worst:
    """Tracks the smallest margin seen and where."""

    def __init__(self, name: str):
        self.name = name
        self.margin = math.inf
        self.t: float | None = None
        self.y: float | None = None

    def update(self, margins: np.ndarray, t: float, y: np.ndarray) -> None:
        i = int(np.argmin(margins))
        if margins[i] < self.margin:
            self.margin = float(margins[i])
            self.t = t
            self.y = float(y[i])

    def check(self, tolerance: float, strict: bool = False) -> LiftCheck:
        passed = self.margin > 0 if strict else self.margin >= -tolerance
        return LiftCheck(self.name, self.margin, self.t, self.y, passed)


def verify_lift_properties(
    p: LiftParams,
    t_samples: Iterable[float],
    grid: Grid,
    tolerance: float = 1e-12,
) -> LiftReport:
    """Evaluate every sign and bound property of the lift over the (t, node) box."""
    t_samples = [float(t) for t in t_samples]
    if not t_samples:
        raise ValueError("t_samples must not be empty")

    k = p.kappa
    c_ref = max(k, k * k)
    y = grid.nodes

    names = [
        "phi_nonnegative", "phi_bounded", "phi_increasing", "phi_concave", "phi_origin",
        "phi_far_field", "phi_discrete_concave", "forcing_lower_bound", "linear_constant_nonpositive",
    ]
    worst = {name: _Worst(name) for name in names}
    strict = _Worst("phi_strict")
    ones = np.ones_like(y)
    c_kappa = 0.0
    scale = max(1.0, c_ref * (1.0 + max(t_samples)))

    for t in t_samples:
        prof = lift_profile(t, p, grid)
        c_kappa = max(c_kappa, float(np.max(prof.phi)) / (1.0 + t))

        worst["phi_nonnegative"].update(prof.phi, t, y)
        worst["phi_bounded"].update(c_ref * (1.0 + t) - prof.phi, t, y)
        worst["phi_increasing"].update(prof.phi_y, t, y)
        worst["phi_concave"].update(-prof.phi_yy, t, y)
        worst["phi_origin"].update(np.array([-abs(prof.phi[0])]), t, y[:1])
        far_dev = abs(prof.phi[-1] - k - k * k * t)
        worst["phi_far_field"].update(np.array([FAR_FIELD_TOLERANCE - far_dev]), t, y[-1:])
        second_diff = prof.phi[:-2] - 2.0 * prof.phi[1:-1] + prof.phi[2:]
        worst["phi_discrete_concave"].update(1e-12 * scale - second_diff, t, y[1:-1])
        forcing = forcing_values(prof)
        worst["forcing_lower_bound"].update(forcing - 0.5 * prof.phi ** 2, t, y)
        worst["linear_constant_nonpositive"].update(-linear_values(ones, prof, grid), t, y)
        if k > 0:
            strict.update(prof.phi[1:], t, y[1:])

    checks = [
        worst["phi_nonnegative"].check(tolerance),
        worst["phi_bounded"].check(tolerance),
        worst["phi_increasing"].check(tolerance),
        worst["phi_concave"].check(tolerance),
        worst["phi_origin"].check(0.0),
        worst["phi_far_field"].check(0.0),
        worst["phi_discrete_concave"].check(0.0),
        # trapezoid integration error of a concave integrand only raises F
        worst["forcing_lower_bound"].check(1e-9 * scale * scale),
        worst["linear_constant_nonpositive"].check(tolerance * scale),
    ]
    if k > 0:
        checks.append(strict.check(tolerance, strict=True))

    report = LiftReport(
        kappa=k,
        checks=checks,
        c_kappa=c_kappa,
        c_kappa_reference=c_ref,
        tolerance=tolerance,
    )
    for c in checks:
        log = logger.info if c.passed else logger.warning
        log("lift check %-28s margin=%.3e passed=%s", c.name, c.margin, c.passed)
    return report
