"""Time integration of the axis system.

The b-form evolves b = -du/dx on the axis,

    d_t b - d_yy b - b^2 + (int b) d_y b = -kappa^2,   b(0) = 0, b(y_max) = -kappa,

and reconstructs a = b + phi. The a-form evolves a directly with the forcing F
and the linear term L from the lift, with a(0) = 0, a(y_max) = kappa^2 t.
Diffusion is implicit (tridiagonal solve), everything else explicit.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from .grid import Field, Grid, make_grid
from .lift import forcing_values, lift_profile, linear_values, phi
from .lyapunov import G, LyapunovTrace, build_trace
from .models import BlowupReport, Formulation, LiftParams, Outcome, ProfileKind, Scheme, SolverConfig
from .weight import Weight

logger = logging.getLogger(__name__)

SAMPLE_LEVEL_FACTOR = 2.0 ** 0.25
DOUBLING_WINDOW = 10
MAX_STEP_GROWTH = 2.0  # bound on dt_n / dt_{n-1} for SBDF2

SourceFn = Callable[[float, np.ndarray], np.ndarray]
ProgressFn = Callable[[int, float, float], None]


class BlowupDetected(FloatingPointError):
    """A step produced non-finite values."""


@dataclass(frozen=True, eq=False)
class StepHistory:
    """Previous step data needed by the two-step scheme."""
    dt: float
    u: np.ndarray
    explicit: np.ndarray


@dataclass(frozen=True, eq=False)
class State:
    grid: Grid
    t: float
    b: np.ndarray
    a: np.ndarray
    step_index: int = 0
    history: Optional[StepHistory] = None

    @property
    def max_abs_a(self) -> float:
        return float(np.max(np.abs(self.a)))

    def unknown(self, formulation: Formulation) -> np.ndarray:
        return self.b if formulation is Formulation.B else self.a


def initial_datum(
    kind: ProfileKind,
    amplitude: float,
    grid: Grid,
    p: LiftParams,
    profile: Optional[np.ndarray] = None,
) -> State:
    """a0 = A y^2 exp(-y^2) (or A times a tabulated profile), b0 = a0 - kappa Erf(y/2)."""
    if not math.isfinite(amplitude) or amplitude < 0:
        raise ValueError(f"amplitude must be finite and >= 0, got {amplitude}")
    y = grid.nodes
    if kind is ProfileKind.GAUSSIAN_BUMP:
        a0 = amplitude * y * y * np.exp(-y * y)
    else:
        if profile is None:
            raise ValueError("a custom initial datum needs a profile")
        shape = np.asarray(profile, dtype=float)
        if shape.shape != y.shape:
            raise ValueError(f"profile needs {len(y)} values, got shape {shape.shape}")
        if not np.all(np.isfinite(shape)):
            raise ValueError("profile values must be finite")
        if shape[0] != 0:
            raise ValueError(f"profile must vanish at y = 0, got a0(0) = {shape[0]}")
        if np.any(shape < 0):
            raise ValueError(f"profile must be non-negative, min is {shape.min()}")
        a0 = amplitude * shape
    b0 = a0 - phi(0.0, y, p)
    return State(grid=grid, t=0.0, b=b0, a=a0)


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------

def _explicit_b(b: np.ndarray, grid: Grid, p: LiftParams) -> np.ndarray:
    return b * b - grid.cumulative(b) * grid.d1(b) - p.kappa ** 2


def _explicit_a(a: np.ndarray, grid: Grid, t: float, p: LiftParams) -> np.ndarray:
    prof = lift_profile(t, p, grid)
    return a * a - grid.cumulative(a) * grid.d1(a) + linear_values(a, prof, grid) + forcing_values(prof)


def rhs_b(state: State, p: LiftParams) -> Field:
    """d_yy b + b^2 - (int b) d_y b - kappa^2."""
    grid = state.grid
    return Field(grid, grid.d2(state.b) + _explicit_b(state.b, grid, p))


def rhs_a(state: State, p: LiftParams) -> Field:
    """d_yy a + a^2 - (int a) d_y a + L[a] + F."""
    grid = state.grid
    return Field(grid, grid.d2(state.a) + _explicit_a(state.a, grid, state.t, p))


def _boundary_values(formulation: Formulation, t: float, p: LiftParams) -> tuple[float, float]:
    if formulation is Formulation.B:
        return 0.0, -p.kappa
    return 0.0, p.kappa ** 2 * t


def _implicit_solve(rhs: np.ndarray, lead: float, dt: float, grid: Grid) -> np.ndarray:
    """Solve (lead I - dt D2) u = rhs; rhs[0] and rhs[-1] are the Dirichlet values.

    The end rows are decoupled: boundary values enter the first and last
    interior rows through the right-hand side.
    """
    n1 = grid.n + 1
    r = dt / (grid.h * grid.h)
    rhs = np.array(rhs, dtype=float)
    rhs[1] += r * rhs[0]
    rhs[-2] += r * rhs[-1]
    ab = np.zeros((3, n1))
    ab[0, 2:-1] = -r              # super-diagonal of rows 1..n-2
    ab[1, :] = lead + 2.0 * r
    ab[1, 0] = ab[1, -1] = 1.0
    ab[2, 1:-2] = -r              # sub-diagonal of rows 2..n-1
    try:
        u = solve_banded((1, 1), ab, rhs)
    except (ValueError, np.linalg.LinAlgError) as e:
        raise BlowupDetected(f"implicit solve failed: {e}") from e
    if not np.all(np.isfinite(u)):
        raise BlowupDetected("implicit solve returned non-finite values")
    return u


def step(
    state: State,
    dt: float,
    config: SolverConfig,
    p: LiftParams,
    source: Optional[SourceFn] = None,
) -> State:
    """Advance one IMEX step; raises BlowupDetected on non-finite values."""
    if not (dt > 0 and dt <= config.dt_init * (1.0 + 1e-12)):
        raise ValueError(f"dt must lie in (0, dt_init={config.dt_init}], got {dt}")
    grid = state.grid
    form = config.formulation
    u = state.unknown(form)

    with np.errstate(over="ignore", invalid="ignore"):
        if form is Formulation.B:
            explicit = _explicit_b(u, grid, p)
        else:
            explicit = _explicit_a(u, grid, state.t, p)
        if source is not None:
            explicit = explicit + source(state.t, grid.nodes)
    if not np.all(np.isfinite(explicit)):
        raise BlowupDetected(f"explicit terms overflowed at t={state.t}")

    hist = state.history
    if config.scheme is Scheme.IMEX2 and hist is not None:
        w = dt / hist.dt
        lead = (1.0 + 2.0 * w) / (1.0 + w)
        rhs = (1.0 + w) * u - (w * w / (1.0 + w)) * hist.u + dt * ((1.0 + w) * explicit - w * hist.explicit)
    else:
        lead = 1.0
        rhs = u + dt * explicit

    t_new = state.t + dt
    rhs[0], rhs[-1] = _boundary_values(form, t_new, p)
    u_new = _implicit_solve(rhs, lead, dt, grid)

    phi_new = phi(t_new, grid.nodes, p)
    if form is Formulation.B:
        b_new, a_new = u_new, u_new + phi_new
    else:
        b_new, a_new = u_new - phi_new, u_new
    return State(
        grid=grid,
        t=t_new,
        b=b_new,
        a=a_new,
        step_index=state.step_index + 1,
        history=StepHistory(dt, u, explicit),
    )


def min_principle_monitor(state: State) -> float:
    return float(np.min(state.a))


def min_principle_tolerance(state: State, config: SolverConfig) -> float:
    """Lower bound -C h^2 max(1, max|a|) for min a; the undershoot scales with the solution."""
    h = state.grid.h
    return -config.min_principle_constant * h * h * max(1.0, state.max_abs_a)


def stable_dt(state: State, config: SolverConfig) -> float:
    """safety * min(h / max|int u|, 1 / max|u|), inf when both maxima vanish."""
    grid = state.grid
    u = state.unknown(config.formulation)
    u_max = float(np.max(np.abs(u)))
    int_max = float(np.max(np.abs(grid.cumulative(u))))
    limit = min(
        grid.h / int_max if int_max > 0 else math.inf,
        1.0 / u_max if u_max > 0 else math.inf,
    )
    return config.safety * limit


# ---------------------------------------------------------------------------
# Manufactured solution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedSolution:
    """b*(t, y) = exp(-t) sin(pi y / L) - kappa (1 - cos(pi y / L)) / 2 on [0, L]."""
    kappa: float
    length: float

    @property
    def k(self) -> float:
        return math.pi / self.length

    def exact(self, t: float, y: np.ndarray) -> np.ndarray:
        ky = self.k * y
        return math.exp(-t) * np.sin(ky) - self.kappa * 0.5 * (1.0 - np.cos(ky))

    def antiderivative(self, t: float, y: np.ndarray) -> np.ndarray:
        ky = self.k * y
        return (
            math.exp(-t) * (1.0 - np.cos(ky)) / self.k
            - self.kappa * (0.5 * y - 0.5 * np.sin(ky) / self.k)
        )

    def source(self, t: float, y: np.ndarray) -> np.ndarray:
        """Residual of the b-equation at b*, added to the explicit terms."""
        k, e = self.k, math.exp(-t)
        ky = k * y
        b = self.exact(t, y)
        b_t = -e * np.sin(ky)
        b_y = e * k * np.cos(ky) - self.kappa * 0.5 * k * np.sin(ky)
        b_yy = -e * k * k * np.sin(ky) - self.kappa * 0.5 * k * k * np.cos(ky)
        return b_t - b_yy - (b * b - self.antiderivative(t, y) * b_y - self.kappa ** 2)

    def state(self, grid: Grid, p: LiftParams, t: float = 0.0) -> State:
        b = self.exact(t, grid.nodes)
        b[0], b[-1] = 0.0, -self.kappa
        return State(grid=grid, t=t, b=b, a=b + phi(t, grid.nodes, p))


def manufactured_solution(kappa: float, length: float) -> ManufacturedSolution:
    if length <= 0:
        raise ValueError(f"length must be positive, got {length}")
    return ManufacturedSolution(kappa=kappa, length=length)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    trajectory: list[State]
    report: BlowupReport
    trace: Optional[LyapunovTrace] = None
    records: list[dict] = field(default_factory=list)
    probes: tuple[float, ...] = ()


def _record(state: State, dt: float, probes: tuple[float, ...]) -> dict:
    row = {
        "t": state.t,
        "dt": dt,
        "max_abs_a": state.max_abs_a,
        "min_a": min_principle_monitor(state),
    }
    for y in probes:
        row[f"b_y={y:g}"] = float(np.interp(y, state.grid.nodes, state.b))
    return row


def _doubling_crossings(t0: float, m0: float, t1: float, m1: float, level: float, out: list[float]) -> float:
    """Append interpolated times where max|a| passes level, 2*level, ...; return next level."""
    while m1 >= level > 0:
        frac = (level - m0) / (m1 - m0) if m1 != m0 else 1.0
        out.append(t0 + min(max(frac, 0.0), 1.0) * (t1 - t0))
        level *= 2.0
    return level


def amplitude_for_threshold(
    C: float,
    grid: Grid,
    weight: Weight,
    p: LiftParams,
    margin: float = 1.0,
    kind: ProfileKind = ProfileKind.GAUSSIAN_BUMP,
    profile: Optional[np.ndarray] = None,
) -> float:
    """Smallest amplitude A with G0(A) >= margin * 4 C^2; G0 is linear in A."""
    unit = G(initial_datum(kind, 1.0, grid, p, profile), weight)
    if unit <= 0:
        raise ValueError("the unit-amplitude datum has G0 <= 0")
    return margin * 4.0 * C * C / unit


def run(
    config: SolverConfig,
    p: LiftParams,
    weight: Optional[Weight] = None,
    initial: Optional[State] = None,
    amplitude: float = 10.0,
    progress_callback: Optional[ProgressFn] = None,
) -> RunResult:
    """Integrate to t_max or blowup. Terminal conditions end up in the report."""
    grid = make_grid(config.y_max, config.n)
    state = initial or initial_datum(ProfileKind.GAUSSIAN_BUMP, amplitude, grid, p)
    grid = state.grid
    probes = tuple(config.probes)

    sample_times = np.linspace(0.0, config.t_max, config.samples + 1)
    next_sample = 1
    base = max(state.max_abs_a, 1.0)
    next_level = base * SAMPLE_LEVEL_FACTOR
    next_doubling = base * 2.0
    doublings: list[float] = [state.t]

    trajectory = [state]
    records = [_record(state, 0.0, probes)]
    min_a = min_principle_monitor(state)
    far_grad = abs(float(grid.d1(state.b)[-1]))
    outcome = Outcome.REACHED_T_MAX
    t_star = None
    dt = 0.0

    logger.info(
        "run: kappa=%g y_max=%g n=%d scheme=%s form=%s t_max=%g",
        p.kappa, grid.y_max, grid.n, config.scheme.value, config.formulation.value, config.t_max,
    )
    t_end = config.t_max * (1.0 - 1e-14)
    while state.t < t_end:
        remaining = config.t_max - state.t
        dt = min(config.dt_init, remaining, stable_dt(state, config))
        if state.history is not None:
            dt = min(dt, MAX_STEP_GROWTH * state.history.dt)
        if dt < config.dt_min and remaining > config.dt_min:
            outcome, t_star = Outcome.BLEWUP, state.t
            logger.info("dt collapsed to %.3e at t=%.10g", dt, state.t)
            break
        try:
            new = step(state, dt, config, p)
        except BlowupDetected as e:
            outcome, t_star = Outcome.BLEWUP, state.t
            logger.info("non-finite step at t=%.10g: %s", state.t, e)
            break

        m_old, m_new = state.max_abs_a, new.max_abs_a
        next_doubling = _doubling_crossings(state.t, m_old, new.t, m_new, next_doubling, doublings)
        state = new
        min_a = min(min_a, min_principle_monitor(state))
        far_grad = max(far_grad, abs(float(grid.d1(state.b)[-1])))

        recorded = False
        if m_new >= next_level or (next_sample < len(sample_times) and state.t >= sample_times[next_sample]):
            trajectory.append(replace(state, history=None))
            records.append(_record(state, dt, probes))
            recorded = True
            while next_level <= m_new:
                next_level *= SAMPLE_LEVEL_FACTOR
            while next_sample < len(sample_times) and sample_times[next_sample] <= state.t:
                next_sample += 1

        if progress_callback is not None:
            progress_callback(state.step_index, state.t, m_new)
        if state.step_index % 1000 == 0:
            logger.debug("step %d t=%.8g dt=%.3e max|a|=%.6g", state.step_index, state.t, dt, m_new)

        if m_new > config.blowup_threshold:
            outcome, t_star = Outcome.BLEWUP, state.t
            logger.info("max|a| = %.3e passed the threshold at t=%.10g", m_new, state.t)
            if not recorded:
                trajectory.append(replace(state, history=None))
                records.append(_record(state, dt, probes))
            break
        tol_min = min_principle_tolerance(state, config)
        if min_principle_monitor(state) < tol_min:
            outcome = Outcome.MIN_PRINCIPLE_VIOLATION
            logger.warning("min a = %.3e below -C h^2 max(1, max|a|) = %.3e at t=%.10g", min_principle_monitor(state), tol_min, state.t)
            if not recorded:
                trajectory.append(replace(state, history=None))
                records.append(_record(state, dt, probes))
            break

    if trajectory[-1].step_index != state.step_index:
        trajectory.append(replace(state, history=None))
        records.append(_record(state, dt, probes))

    if far_grad > config.far_field_tolerance and outcome is not Outcome.BLEWUP:
        logger.warning("far-field gradient %.3e exceeds %.3e; y_max may be too small", far_grad, config.far_field_tolerance)

    durations = list(np.diff(doublings))
    tail = durations[-DOUBLING_WINDOW:]
    decreasing = len(tail) == DOUBLING_WINDOW and all(b < a for a, b in zip(tail, tail[1:]))

    report = BlowupReport(
        outcome=outcome,
        t_star=t_star,
        final_time=state.t,
        final_max_abs_a=state.max_abs_a,
        min_a_over_run=min_a,
        steps=state.step_index,
        final_dt=dt,
        doubling_times=[float(d) for d in durations],
        doubling_decreasing=decreasing,
        max_far_field_gradient=far_grad,
        amplitude=amplitude if initial is None else None,
    )
    logger.info(
        "run finished: %s at t=%.10g after %d steps, max|a|=%.6g, min a=%.3e",
        outcome.value, state.t, state.step_index, report.final_max_abs_a, min_a,
    )

    trace = build_trace(trajectory, weight, p) if weight is not None else None
    return RunResult(trajectory=trajectory, report=report, trace=trace, records=records, probes=probes)
