"""Weighted functional G(t) = int a w dy, its rate decomposition and the Riccati comparison.

Along a solution, dG/dt splits as I1 + 2 I2 - I3/2 + I4 + F_term (+ the flux
left at y_max on the truncated domain), with

    I1 = int a w''          I2 = int a^2 w
    I3 = int (int a)^2 w''  I4 = int L[a] w      F_term = int F w

and the bounds on each term assemble into
dG/dt >= -C (1 + t) G + G^2 / C, whose solutions blow up once G0 >= 4 C^2.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .grid import Grid, check_truncation
from .lift import LiftProfile, forcing_values, lift_profile, linear_values
from .models import LiftParams
from .weight import Weight

if TYPE_CHECKING:
    from .solver import State

logger = logging.getLogger(__name__)

RICCATI_CEILING = 1e12
FIT_QUANTILE = 0.99


@lru_cache(maxsize=16)
def weight_on_grid(weight: Weight, grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(w, w', w'') at the nodes, from the closed forms."""
    y = grid.nodes
    arrays = tuple(np.asarray(f(y), dtype=float) for f in (weight.eval_w, weight.eval_w1, weight.eval_w2))
    for arr in arrays:
        arr.setflags(write=False)
    return arrays


def G(state: "State", weight: Weight) -> float:
    w, _, _ = weight_on_grid(weight, state.grid)
    integrand = state.a * w
    check_truncation(integrand, "G")
    return state.grid.integrate(integrand)


def far_field_tail(state: "State", weight: Weight) -> float:
    """Mass beyond y_max if a keeps its boundary value there."""
    return float(state.a[-1]) * weight.tail_mass(state.grid.y_max)


@dataclass
class RateDecomposition:
    I1: float
    I2: float
    I3: float
    I4: float
    F_term: float
    boundary: float = 0.0

    @property
    def total(self) -> float:
        return self.I1 + 2.0 * self.I2 - 0.5 * self.I3 + self.I4 + self.F_term + self.boundary

    @property
    def without_forcing(self) -> float:
        return self.I1 + 2.0 * self.I2 - 0.5 * self.I3 + self.I4


def _decompose(a: np.ndarray, grid: Grid, weight: Weight, profile: LiftProfile) -> RateDecomposition:
    w, w1, w2 = weight_on_grid(weight, grid)
    big_a = grid.cumulative(a)
    a_y = grid.d1(a)
    boundary = (
        a_y[-1] * w[-1]
        - a[-1] * w1[-1]
        - big_a[-1] * a[-1] * w[-1]
        + 0.5 * big_a[-1] ** 2 * w1[-1]
    )
    return RateDecomposition(
        I1=grid.integrate(a * w2),
        I2=grid.integrate(a * a * w),
        I3=grid.integrate(big_a * big_a * w2),
        I4=grid.integrate(linear_values(a, profile, grid) * w),
        F_term=grid.integrate(forcing_values(profile) * w),
        boundary=float(boundary),
    )


def decompose_rhs(state: "State", weight: Weight, p: LiftParams) -> RateDecomposition:
    return _decompose(state.a, state.grid, weight, lift_profile(state.t, p, state.grid))


def exact_rate(state: "State", weight: Weight, p: LiftParams) -> float:
    """int (a_yy + a^2 - (int a) a_y + L[a] + F) w, before any integration by parts."""
    grid = state.grid
    a = state.a
    prof = lift_profile(state.t, p, grid)
    w, _, _ = weight_on_grid(weight, grid)
    rate = (
        grid.d2(a) + a * a - grid.cumulative(a) * grid.d1(a)
        + linear_values(a, prof, grid) + forcing_values(prof)
    )
    return grid.integrate(rate * w)


@dataclass(frozen=True)
class BoundConstants:
    c_f: float
    bar_c_f: float
    c_1: float
    beta: float
    c_kappa: float

    @property
    def assembled_C(self) -> float:
        """max(1, c_f + (3 + bar_c_f) C_kappa, c_1 / (2 (1 - beta)))."""
        return max(
            1.0,
            self.c_f + (3.0 + self.bar_c_f) * self.c_kappa,
            self.c_1 / (2.0 * (1.0 - self.beta)),
        )

    @classmethod
    def from_weight(cls, weight: Weight, c_kappa: float) -> "BoundConstants":
        return cls(weight.c_f, weight.bar_c_f, weight.c_1, weight.beta, c_kappa)

    def to_dict(self) -> dict:
        return {
            "c_f": self.c_f,
            "bar_c_f": self.bar_c_f,
            "c_1": self.c_1,
            "beta": self.beta,
            "c_kappa": self.c_kappa,
            "assembled_C": self.assembled_C,
        }


@dataclass
class BoundMargins:
    I1: float
    I2: float
    I3: float
    I4: float
    assembled: float


def check_bounds(G_value: float, t: float, parts: RateDecomposition, constants: BoundConstants) -> BoundMargins:
    """Signed margins of the four term bounds and of the assembled inequality."""
    k = constants
    C = k.assembled_C
    return BoundMargins(
        I1=parts.I1 + k.c_f * G_value,
        I2=parts.I2 - G_value * G_value / k.c_1,
        I3=4.0 * k.beta * parts.I2 - parts.I3,
        I4=parts.I4 + (3.0 + k.bar_c_f) * k.c_kappa * (1.0 + t) * G_value,
        assembled=parts.without_forcing - (G_value * G_value / C - C * (1.0 + t) * G_value),
    )


@dataclass
class RiccatiSolution:
    C: float
    G0: float
    t: np.ndarray
    values: np.ndarray
    blowup_time: Optional[float] = None

    def at(self, times: np.ndarray) -> np.ndarray:
        """Values at the given times; nan outside the integrated range."""
        times = np.asarray(times, dtype=float)
        out = np.interp(times, self.t, self.values)
        return np.where((times < self.t[0]) | (times > self.t[-1]), np.nan, out)


@dataclass
class LyapunovTrace:
    t: np.ndarray
    G: np.ndarray
    dG_dt: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    I3: np.ndarray
    I4: np.ndarray
    F_term: np.ndarray
    boundary: np.ndarray
    exact_rate: np.ndarray
    G_tail: np.ndarray
    margin_I1: np.ndarray
    margin_I2: np.ndarray
    margin_I3: np.ndarray
    margin_I4: np.ndarray
    margin_assembled: np.ndarray
    constants: BoundConstants
    C_hat: float = 1.0
    riccati_G: np.ndarray = field(default_factory=lambda: np.array([]))

    def __len__(self) -> int:
        return len(self.t)

    def columns(self) -> dict[str, np.ndarray]:
        """CSV columns in output order."""
        riccati = self.riccati_G if len(self.riccati_G) == len(self.t) else np.full(len(self.t), np.nan)
        return {
            "t": self.t,
            "G": self.G,
            "dG_dt_numeric": self.dG_dt,
            "I1": self.I1,
            "I2": self.I2,
            "I3": self.I3,
            "I4": self.I4,
            "F_term": self.F_term,
            "margin_I1": self.margin_I1,
            "margin_I2": self.margin_I2,
            "margin_I3": self.margin_I3,
            "margin_I4": self.margin_I4,
            "riccati_G": riccati,
            "boundary": self.boundary,
            "exact_rate": self.exact_rate,
            "G_tail": self.G_tail,
            "margin_assembled": self.margin_assembled,
        }


def numeric_rate(t: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Second-order centered differences on possibly non-uniform samples."""
    if len(t) < 2:
        return np.zeros_like(values)
    return np.gradient(values, t, edge_order=2 if len(t) >= 3 else 1)


def build_trace(states: Sequence["State"], weight: Weight, p: LiftParams) -> LyapunovTrace:
    """Evaluate G, its decomposition and the bound margins along sampled states."""
    if not states:
        raise ValueError("build_trace needs at least one state")
    t = np.array([s.t for s in states])
    if np.any(np.diff(t) <= 0):
        raise ValueError("sample times must be strictly increasing")

    rows = []
    c_kappa = 0.0
    for s in states:
        prof = lift_profile(s.t, p, s.grid)
        c_kappa = max(c_kappa, float(np.max(prof.phi)) / (1.0 + s.t))
        rows.append((G(s, weight), _decompose(s.a, s.grid, weight, prof), exact_rate(s, weight, p), far_field_tail(s, weight)))

    constants = BoundConstants.from_weight(weight, c_kappa)
    G_vals = np.array([r[0] for r in rows])
    parts = [r[1] for r in rows]
    margins = [check_bounds(g, ti, d, constants) for g, ti, d in zip(G_vals, t, parts)]

    trace = LyapunovTrace(
        t=t,
        G=G_vals,
        dG_dt=numeric_rate(t, G_vals),
        I1=np.array([d.I1 for d in parts]),
        I2=np.array([d.I2 for d in parts]),
        I3=np.array([d.I3 for d in parts]),
        I4=np.array([d.I4 for d in parts]),
        F_term=np.array([d.F_term for d in parts]),
        boundary=np.array([d.boundary for d in parts]),
        exact_rate=np.array([r[2] for r in rows]),
        G_tail=np.array([r[3] for r in rows]),
        margin_I1=np.array([m.I1 for m in margins]),
        margin_I2=np.array([m.I2 for m in margins]),
        margin_I3=np.array([m.I3 for m in margins]),
        margin_I4=np.array([m.I4 for m in margins]),
        margin_assembled=np.array([m.assembled for m in margins]),
        constants=constants,
    )
    trace.C_hat = fit_constant(trace)
    if len(t) >= 2 and G_vals[0] >= 0:
        riccati = riccati_lower_bound(float(G_vals[0]), trace.C_hat, (float(t[0]), float(t[-1])))
        trace.riccati_G = riccati.at(t)
    logger.info(
        "lyapunov trace: %d samples, G0=%.6g, C_hat=%.4g, assembled C=%.4g",
        len(t), G_vals[0], trace.C_hat, constants.assembled_C,
    )
    return trace


def fit_constant(trace: LyapunovTrace) -> float:
    """Smallest C >= 1 with dG/dt >= G^2/C - C (1+t) G at 99% of the samples.

    Per sample the inequality is (1+t) G C^2 + G' C - G^2 >= 0, whose positive
    root is the minimal admissible C there.
    """
    G_vals, rate, t = trace.G, trace.dG_dt, trace.t
    ok = G_vals > 0
    if not np.any(ok):
        return 1.0
    g, r, tt = G_vals[ok], rate[ok], t[ok]
    lead = (1.0 + tt) * g
    roots = (-r + np.sqrt(r * r + 4.0 * lead * g * g)) / (2.0 * lead)
    return max(1.0, float(np.quantile(roots, FIT_QUANTILE, method="higher")))


def threshold_check(G0: float, C: float) -> bool:
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    return G0 >= 4.0 * C * C


def riccati_lower_bound(
    G0: float,
    C: float,
    t_span: tuple[float, float],
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_step: float = np.inf,
) -> RiccatiSolution:
    """Integrate G' = G^2/C - C (1+t) G with RK45 until t_span ends or G hits 1e12.

    Past the ceiling G ~ C / (T - t), so the blowup time is extrapolated as
    t_event + C / G_event.
    """
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    if G0 < 0:
        raise ValueError(f"G0 must be >= 0, got {G0}")

    def rhs(t, y):
        return [y[0] * y[0] / C - C * (1.0 + t) * y[0]]

    def ceiling(t, y):
        return y[0] - RICCATI_CEILING

    ceiling.terminal = True
    ceiling.direction = 1

    sol = solve_ivp(rhs, t_span, [G0], method="RK45", rtol=rtol, atol=atol, events=ceiling, max_step=max_step)
    blowup = None
    if sol.status == 1 and len(sol.t_events[0]):
        t_e = float(sol.t_events[0][0])
        g_e = float(sol.y_events[0][0][0])
        blowup = t_e + C / g_e
    logger.debug("riccati C=%.4g G0=%.6g: %d steps, blowup=%s", C, G0, len(sol.t), blowup)
    return RiccatiSolution(C=C, G0=G0, t=sol.t, values=sol.y[0], blowup_time=blowup)


def riccati_blowup_time_exact(G0: float, C: float) -> Optional[float]:
    """Blowup time from 1/G: solves int_0^T exp(-C(s + s^2/2)) ds = C / G0.

    Returns None when the solution stays bounded.
    """
    if G0 <= 0:
        return None
    target = C / G0

    def mass(T: float) -> float:
        return quad(lambda s: math.exp(-C * (s + 0.5 * s * s)), 0.0, T, epsabs=1e-14, epsrel=1e-13)[0]

    if mass(np.inf) <= target:
        return None
    hi = 1.0
    while mass(hi) <= target:
        hi *= 2.0
    return brentq(lambda T: mass(T) - target, 0.0, hi, xtol=1e-14, rtol=1e-13)


def comparison_margins(trace: LyapunovTrace, riccati: RiccatiSolution) -> np.ndarray:
    """(G - G_R) / G_R at samples where both are finite, before either blowup."""
    g_r = riccati.at(trace.t)
    ok = np.isfinite(g_r) & (g_r > 0) & np.isfinite(trace.G)
    if riccati.blowup_time is not None:
        ok &= trace.t < riccati.blowup_time
    return (trace.G[ok] - g_r[ok]) / g_r[ok]


@dataclass
class StructuralCheck:
    count: int
    seed: int
    min_margin_I2: float
    min_margin_I3: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "seed": self.seed,
            "min_margin_I2": self.min_margin_I2,
            "min_margin_I3": self.min_margin_I3,
            "passed": self.passed,
        }


def random_fields(grid: Grid, seed: int, count: int, modes: int = 3) -> np.ndarray:
    """Seeded fields a(y) = y * sum_j c_j exp(-(y - mu_j)^2 / (2 sigma_j^2)), one per row."""
    rng = np.random.default_rng(seed)
    y = grid.nodes
    c = rng.uniform(0.0, 1.0, size=(count, modes))
    mu = rng.uniform(0.0, 10.0, size=(count, modes))
    sigma = rng.uniform(0.3, 3.0, size=(count, modes))
    bumps = np.exp(-((y[None, None, :] - mu[:, :, None]) ** 2) / (2.0 * sigma[:, :, None] ** 2))
    return y[None, :] * np.einsum("km,kmy->ky", c, bumps)


def random_field_check(weight: Weight, grid: Grid, seed: int = 0, count: int = 100) -> StructuralCheck:
    """I2 >= G^2/c_1 and I3 <= 4 beta I2 on synthetic fields vanishing at y = 0."""
    w, _, w2 = weight_on_grid(weight, grid)
    worst_i2 = math.inf
    worst_i3 = math.inf
    passed = True
    for a in random_fields(grid, seed, count):
        big_a = grid.cumulative(a)
        g = grid.integrate(a * w)
        i2 = grid.integrate(a * a * w)
        i3 = grid.integrate(big_a * big_a * w2)
        scale = max(1.0, abs(i2), abs(i3))
        m2 = i2 - g * g / weight.c_1
        m3 = 4.0 * weight.beta * i2 - i3
        worst_i2 = min(worst_i2, m2)
        worst_i3 = min(worst_i3, m3)
        passed &= m2 >= -1e-12 * scale and m3 >= -1e-9 * scale
    logger.info("random fields (seed %d, %d fields): min I2 margin %.3e, min I3 margin %.3e", seed, count, worst_i2, worst_i3)
    return StructuralCheck(count, seed, worst_i2, worst_i3, bool(passed))
