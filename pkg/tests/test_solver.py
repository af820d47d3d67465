import math

import numpy as np
import pytest

from prandtl_blowup.grid import make_grid
from prandtl_blowup.lift import phi, phi_t
from prandtl_blowup.lyapunov import G, comparison_margins, riccati_lower_bound
from prandtl_blowup.models import Formulation, LiftParams, Outcome, ProfileKind, Scheme, SolverConfig
from prandtl_blowup.solver import (
    State,
    amplitude_for_threshold,
    initial_datum,
    manufactured_solution,
    min_principle_monitor,
    min_principle_tolerance,
    rhs_a,
    rhs_b,
    run,
    stable_dt,
    step,
)


def _advance(mms, n, dt, t_end, scheme):
    grid = make_grid(mms.length, n)
    p = LiftParams(kappa=mms.kappa)
    config = SolverConfig(y_max=mms.length, n=n, scheme=scheme, formulation=Formulation.B, dt_init=dt, t_max=t_end)
    state = mms.state(grid, p)
    for _ in range(round(t_end / dt)):
        state = step(state, dt, config, p, source=mms.source)
    return state


def test_initial_datum(small_grid, unit_lift):
    state = initial_datum(ProfileKind.GAUSSIAN_BUMP, 10.0, small_grid, unit_lift)
    y = small_grid.nodes
    np.testing.assert_allclose(state.a, 10.0 * y * y * np.exp(-y * y))
    np.testing.assert_allclose(state.b, state.a - phi(0.0, y, unit_lift))
    assert state.b[0] == 0.0
    assert state.max_abs_a == pytest.approx(10.0 / math.e, rel=1e-3)
    assert min_principle_monitor(state) == 0.0


def test_zero_amplitude_datum(small_grid, unit_lift):
    state = initial_datum(ProfileKind.GAUSSIAN_BUMP, 0.0, small_grid, unit_lift)
    assert np.all(state.a == 0.0)
    assert state.b[-1] == pytest.approx(-1.0, abs=1e-15)


def test_custom_datum_validation(small_grid, unit_lift):
    y = small_grid.nodes
    shape = y * np.exp(-y)
    state = initial_datum(ProfileKind.CUSTOM, 2.0, small_grid, unit_lift, shape)
    np.testing.assert_allclose(state.a, 2.0 * shape)
    with pytest.raises(ValueError, match="vanish"):
        initial_datum(ProfileKind.CUSTOM, 1.0, small_grid, unit_lift, shape + 1.0)
    with pytest.raises(ValueError, match="non-negative"):
        initial_datum(ProfileKind.CUSTOM, 1.0, small_grid, unit_lift, -shape)
    with pytest.raises(ValueError, match="needs a profile"):
        initial_datum(ProfileKind.CUSTOM, 1.0, small_grid, unit_lift)
    with pytest.raises(ValueError, match="amplitude"):
        initial_datum(ProfileKind.GAUSSIAN_BUMP, -1.0, small_grid, unit_lift)


def test_rhs_of_trivial_state_vanishes(small_grid):
    p = LiftParams(kappa=0.0)
    state = initial_datum(ProfileKind.GAUSSIAN_BUMP, 0.0, small_grid, p)
    assert np.all(rhs_b(state, p).values == 0.0)
    assert np.all(rhs_a(state, p).values == 0.0)


def test_rhs_b_far_field(small_grid, unit_lift):
    state = initial_datum(ProfileKind.GAUSSIAN_BUMP, 10.0, small_grid, unit_lift)
    assert abs(rhs_b(state, unit_lift).values[-1]) < 1e-8


def test_formulations_agree_on_the_right_hand_side(unit_lift):
    t = 0.5
    errors = []
    for n in (1000, 2000):
        grid = make_grid(20.0, n)
        y = grid.nodes
        a = 2.0 * y * y * np.exp(-y * y)
        state = State(grid=grid, t=t, b=a - phi(t, y, unit_lift), a=a)
        diff = rhs_a(state, unit_lift).values - rhs_b(state, unit_lift).values - phi_t(t, y, unit_lift)
        errors.append(np.max(np.abs(diff[1:-1])))
    assert errors[1] < 1e-3
    assert errors[0] / errors[1] > 3.0


def test_step_keeps_trivial_solution(small_grid):
    p = LiftParams(kappa=0.0)
    config = SolverConfig(y_max=20.0, n=1000)
    state = initial_datum(ProfileKind.GAUSSIAN_BUMP, 0.0, small_grid, p)
    for _ in range(5):
        state = step(state, 1e-3, config, p)
    assert np.all(state.b == 0.0)
    assert state.t == pytest.approx(5e-3)
    assert state.step_index == 5


@pytest.mark.parametrize("formulation", list(Formulation))
def test_step_enforces_boundary_values(formulation, small_grid, unit_lift):
    config = SolverConfig(y_max=20.0, n=1000, formulation=formulation)
    state = initial_datum(ProfileKind.GAUSSIAN_BUMP, 5.0, small_grid, unit_lift)
    for _ in range(3):
        state = step(state, 1e-4, config, unit_lift)
    assert state.a[0] == pytest.approx(0.0, abs=1e-15)
    if formulation is Formulation.B:
        assert state.b[0] == 0.0
        assert state.b[-1] == -1.0
    else:
        assert state.a[-1] == pytest.approx(state.t, rel=1e-14)


def test_step_rejects_bad_dt(small_grid, unit_lift):
    config = SolverConfig(y_max=20.0, n=1000, dt_init=1e-3)
    state = initial_datum(ProfileKind.GAUSSIAN_BUMP, 1.0, small_grid, unit_lift)
    with pytest.raises(ValueError):
        step(state, 2e-3, config, unit_lift)
    with pytest.raises(ValueError):
        step(state, 0.0, config, unit_lift)


def test_stable_dt(small_grid, unit_lift):
    config = SolverConfig(y_max=20.0, n=1000)
    zero = initial_datum(ProfileKind.GAUSSIAN_BUMP, 0.0, small_grid, LiftParams(kappa=0.0))
    assert stable_dt(zero, config) == math.inf
    state = initial_datum(ProfileKind.GAUSSIAN_BUMP, 10.0, small_grid, unit_lift)
    assert 0 < stable_dt(state, config) <= config.safety / state.max_abs_a


def test_manufactured_solution_spatial_order():
    mms = manufactured_solution(kappa=1.0, length=4.0)
    errors = []
    for n in (32, 64, 128):
        state = _advance(mms, n, 2.5e-4, 0.2, Scheme.IMEX2)
        errors.append(np.max(np.abs(state.b - mms.exact(state.t, state.grid.nodes))))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders >= 1.8)


@pytest.mark.parametrize("scheme, min_order", [(Scheme.IMEX1, 0.9), (Scheme.IMEX2, 1.8)])
def test_manufactured_solution_temporal_order(scheme, min_order):
    mms = manufactured_solution(kappa=1.0, length=4.0)
    finals = [_advance(mms, 64, dt, 0.4, scheme).b for dt in (0.02, 0.01, 0.005, 0.0025)]
    diffs = [np.max(np.abs(u - v)) for u, v in zip(finals, finals[1:])]
    order = math.log2(diffs[-2] / diffs[-1])
    assert order >= min_order


def test_manufactured_solution_is_exact_initially():
    mms = manufactured_solution(kappa=1.0, length=4.0)
    grid = make_grid(4.0, 64)
    state = mms.state(grid, LiftParams(kappa=1.0))
    assert state.b[0] == 0.0
    assert state.b[-1] == -1.0
    with pytest.raises(ValueError):
        manufactured_solution(kappa=1.0, length=0.0)


def test_trivial_dynamics_stay_zero():
    p = LiftParams(kappa=0.0)
    config = SolverConfig(y_max=20.0, n=200, dt_init=1e-2, t_max=10.0, samples=20)
    result = run(config, p, amplitude=0.0)
    assert result.report.outcome is Outcome.REACHED_T_MAX
    assert result.report.final_time == pytest.approx(10.0)
    assert max(s.max_abs_a for s in result.trajectory) <= 1e-12


def test_run_samples_trajectory(unit_lift):
    config = SolverConfig(y_max=20.0, n=500, t_max=0.2, samples=10)
    result = run(config, unit_lift, amplitude=1.0)
    times = [s.t for s in result.trajectory]
    assert times[0] == 0.0
    assert np.all(np.diff(times) > 0)
    assert times[-1] == pytest.approx(0.2)
    assert len(result.records) == len(result.trajectory)
    assert len(result.trajectory) >= 11
    assert set(result.records[0]) == {"t", "dt", "max_abs_a", "min_a", "b_y=0.5", "b_y=1", "b_y=2", "b_y=4"}
    assert result.trace is None
    assert result.report.amplitude == 1.0


def test_run_reports_progress(unit_lift):
    seen = []
    config = SolverConfig(y_max=20.0, n=200, t_max=0.01, samples=2)
    run(config, unit_lift, amplitude=1.0, progress_callback=lambda i, t, m: seen.append((i, t, m)))
    assert seen
    assert [i for i, _, _ in seen] == list(range(1, len(seen) + 1))


def test_minimum_principle_on_reduced_domain(unit_lift):
    config = SolverConfig(y_max=20.0, n=500, t_max=0.1)
    result = run(config, unit_lift, amplitude=10.0)
    h = 20.0 / 500
    assert result.report.outcome is Outcome.REACHED_T_MAX
    assert result.report.min_a_over_run >= -h * h


def test_min_principle_tolerance_scales_with_solution(small_grid, unit_lift):
    config = SolverConfig(y_max=20.0, n=1000, min_principle_constant=2.0)
    h2 = small_grid.h ** 2
    quiet = initial_datum(ProfileKind.GAUSSIAN_BUMP, 0.0, small_grid, unit_lift)
    large = initial_datum(ProfileKind.GAUSSIAN_BUMP, 1e5, small_grid, unit_lift)
    assert min_principle_tolerance(quiet, config) == pytest.approx(-2.0 * h2)
    assert min_principle_tolerance(large, config) == pytest.approx(-2.0 * h2 * large.max_abs_a)


def test_large_bump_blows_up_on_reduced_domain(unit_lift):
    config = SolverConfig(y_max=20.0, n=1000, t_max=0.1, blowup_threshold=1e6)
    result = run(config, unit_lift, amplitude=500.0)
    report = result.report
    assert report.outcome is Outcome.BLEWUP
    assert report.t_star is not None and report.t_star < 0.1
    assert report.final_max_abs_a > 1e6


@pytest.mark.parametrize("n", [1000, 2000])
def test_formulation_equivalence(n, unit_lift):
    finals = {}
    for form in Formulation:
        config = SolverConfig(y_max=20.0, n=n, formulation=form, t_max=0.25)
        result = run(config, unit_lift, amplitude=5.0)
        assert result.report.final_time == pytest.approx(0.25)
        finals[form] = result.trajectory[-1].a
    h = 20.0 / n
    assert np.max(np.abs(finals[Formulation.B] - finals[Formulation.A])) <= 10 * (h * h + 1e-3)


def test_amplitude_for_threshold(full_grid, weight, unit_lift):
    C = 2.0
    amplitude = amplitude_for_threshold(C, full_grid, weight, unit_lift, margin=1.5)
    state = initial_datum(ProfileKind.GAUSSIAN_BUMP, amplitude, full_grid, unit_lift)
    assert G(state, weight) == pytest.approx(1.5 * 4.0 * C * C, rel=1e-12)


@pytest.mark.slow
def test_minimum_principle_under_refinement(unit_lift):
    undershoot = {}
    for n in (4000, 8000):
        config = SolverConfig(y_max=40.0, n=n, t_max=0.5, min_principle_constant=1.0)
        result = run(config, unit_lift, amplitude=10.0)
        h = 40.0 / n
        assert result.report.outcome is Outcome.REACHED_T_MAX
        assert result.report.min_a_over_run >= -h * h
        undershoot[n] = max(0.0, -result.report.min_a_over_run)
    # below round-off there is no rate to measure
    if undershoot[4000] > 1e-10:
        assert math.log2(undershoot[4000] / max(undershoot[8000], 1e-300)) >= 1.5


@pytest.mark.slow
def test_blowup_witness(full_grid, weight, unit_lift):
    pilot = run(SolverConfig(t_max=0.5), unit_lift, weight, amplitude=10.0)
    C = pilot.trace.C_hat
    amplitude = amplitude_for_threshold(C, full_grid, weight, unit_lift)

    result = run(SolverConfig(), unit_lift, weight, amplitude=amplitude)
    report = result.report
    assert report.outcome is Outcome.BLEWUP
    assert report.t_star is not None and report.t_star < 50.0
    assert report.doubling_decreasing

    trace = result.trace
    assert trace.G[0] >= 4.0 * C * C * (1 - 1e-9)
    riccati = riccati_lower_bound(float(trace.G[0]), trace.C_hat, (0.0, float(trace.t[-1])))
    margins = comparison_margins(trace, riccati)
    assert len(margins) > 0
    assert np.min(margins) >= -0.05
