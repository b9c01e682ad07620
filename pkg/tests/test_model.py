import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from chemolab.equilibria import coexistence_values
from chemolab.exceptions import (
    BlowUpError,
    ConfigurationError,
    InvalidFieldError,
    NegativityError,
    SimulationError,
)
from chemolab.grid import Field, Grid, chemotaxis_divergence, laplacian_neumann
from chemolab.model import (
    FieldSpec,
    InitialCondition,
    ModelParams,
    Sample,
    SimConfig,
    State,
    Termination,
    initial_state,
    max_stable_dt,
    rhs,
    simulate,
    step,
)

from .constants import EXTINCTION_PARAMS, PERSISTENCE_PARAMS, SMALL_N_X, TINY_N_X


@pytest.mark.parametrize(
    "kwargs",
    ({"D": 0.0}, {"r": -1.0}, {"chi": -0.1}, {"a": -1.0}, {"f": -2.0}, {"D": math.nan}),
)
def test_params__invalid__raises(kwargs):
    with pytest.raises(ConfigurationError):
        ModelParams(**kwargs)


def test_params_from_dict__unknown_key__raises():
    with pytest.raises(ConfigurationError, match="Unexpected params values"):
        ModelParams.from_dict({"r": 1, "beta": 2})


def test_params_from_dict__ints__floats():
    params = ModelParams.from_dict({"r": 2, "f": 1})
    assert params.r == 2.0
    assert isinstance(params.r, float)


def test_state__tiny_negative_u__clamped(grid_1d):
    u = np.full(grid_1d.shape, 0.5)
    u[2] = -1e-14
    state = State.from_arrays(grid_1d, u, np.ones(grid_1d.shape))
    assert state.u.values[2] == 0.0


def test_state__negative_u__invalid(grid_1d):
    u = np.full(grid_1d.shape, 0.5)
    u[2] = -1e-6
    with pytest.raises(InvalidFieldError):
        State.from_arrays(grid_1d, u, np.ones(grid_1d.shape))


def test_rhs__trivial_steady_state__zero(grid_2d, persistence_params):
    state = State.constant(grid_2d, 0.0, persistence_params.f)
    du, dv = rhs(state, persistence_params)
    assert np.all(du.values == 0)
    assert np.all(dv.values == 0)


@pytest.mark.parametrize(
    "params",
    (
        ModelParams(**PERSISTENCE_PARAMS),
        ModelParams(D=0.3, chi=4.0, r=3.0, a=2.0, f=0.5),
    ),
)
def test_rhs__coexistence_steady_state__zero(grid_1d, params):
    u_star, v_star = coexistence_values(params)
    du, dv = rhs(State.constant(grid_1d, u_star, v_star), params)
    assert np.abs(du.values).max() <= 1e-14
    assert np.abs(dv.values).max() <= 1e-14


def test_rhs__hand_substitution(grid_1d):
    params = ModelParams(r=1.0, a=1.0, f=0.0)
    du, dv = rhs(State.constant(grid_1d, 1.0, 0.0), params)
    np.testing.assert_allclose(du.values, 0.0)
    np.testing.assert_allclose(dv.values, 1.0)


def test_rhs__random_fields__matches_operator_form(grid_2d, rng):
    params = ModelParams(D=0.4, chi=3.0, r=2.0, a=1.5, f=0.3)
    u = Field(rng.uniform(0.1, 2.0, size=grid_2d.shape), grid_2d)
    v = Field(rng.uniform(0.1, 2.0, size=grid_2d.shape), grid_2d)
    du, dv = rhs(State(u, v), params)

    expected_u = (
        params.D * laplacian_neumann(u).values
        + chemotaxis_divergence(u, v, params.chi).values
        + params.r * u.values * (1 - u.values)
        - u.values * v.values
    )
    expected_v = laplacian_neumann(v).values + params.a * u.values - v.values + params.f
    np.testing.assert_allclose(du.values, expected_u, rtol=1e-12, atol=1e-10)
    np.testing.assert_allclose(dv.values, expected_v, rtol=1e-12, atol=1e-10)


def test_step__euler_mode__hand_computation():
    grid = Grid(n_x=3, length_x=3.0)
    params = ModelParams(r=1.0, a=1.0, f=0.0)
    state = step(State.constant(grid, 1.0, 0.0), params, dt=0.1, method="euler")
    np.testing.assert_allclose(state.u.values, 1.0)
    np.testing.assert_allclose(state.v.values, 0.1)
    assert state.t == pytest.approx(0.1)


def test_step__coexistence_state__unchanged(grid_1d, persistence_params):
    u_star, v_star = coexistence_values(persistence_params)
    dt = max_stable_dt(grid_1d, persistence_params, 0.9)
    state = step(State.constant(grid_1d, u_star, v_star), persistence_params, dt)
    assert np.abs(state.u.values - u_star).max() <= 1e-14
    assert np.abs(state.v.values - v_star).max() <= 1e-14


def test_step__dt_above_cfl__configuration_error(grid_1d, persistence_params):
    dt = max_stable_dt(grid_1d, persistence_params, 0.9)
    with pytest.raises(ConfigurationError, match="Time step"):
        step(State.constant(grid_1d, 0.5, 0.5), persistence_params, dt * 1.01)


def test_step__unknown_method__configuration_error(grid_1d, persistence_params):
    with pytest.raises(ConfigurationError):
        step(State.constant(grid_1d, 0.5, 0.5), persistence_params, 1e-4, method="rk2")


def test_step__negative_density__negativity_error():
    # A strong logistic sink overshoots zero in one Euler step
    grid = Grid(n_x=3, length_x=3.0)
    params = ModelParams(r=1.0, f=0.0)
    state = State.constant(grid, 0.1, 20.0)
    with pytest.raises(NegativityError, match="reduce dt"):
        step(state, params, dt=0.1, method="euler")


def test_step__overflow__blow_up_error():
    grid = Grid(n_x=3, length_x=3.0)
    params = ModelParams(r=1.0, f=0.0)
    with pytest.raises(BlowUpError):
        step(State.constant(grid, 0.0, 1e9), params, dt=0.1, method="euler")


def test_max_stable_dt__uses_unit_diffusion_floor(grid_1d):
    slow = max_stable_dt(grid_1d, ModelParams(D=0.1), 0.9)
    unit = max_stable_dt(grid_1d, ModelParams(D=1.0), 0.9)
    fast = max_stable_dt(grid_1d, ModelParams(D=4.0), 0.9)
    assert slow == unit
    assert fast == pytest.approx(unit / 4)


def _ode_solution(params: ModelParams, y0, times):
    def system(t, y):
        u, v = y
        return [params.r * u * (1 - u) - u * v, params.a * u - v + params.f]

    result = solve_ivp(
        system, (0, max(times)), y0, method="DOP853", rtol=1e-12, atol=1e-14, t_eval=times
    )
    assert result.success
    return result.y


@pytest.mark.parametrize("values", (EXTINCTION_PARAMS, PERSISTENCE_PARAMS))
def test_step__homogeneous_data__matches_ode(values):
    params = ModelParams(**values)
    grid = Grid(n_x=TINY_N_X)
    times = [1.0, 5.0, 10.0]
    expected = _ode_solution(params, [0.7, 0.3], times)

    dt = 0.005
    state = State.constant(grid, 0.7, 0.3)
    steps_done = 0
    for index, t in enumerate(times):
        while steps_done < round(t / dt):
            state = step(state, params, dt)
            steps_done += 1
        u, v = state.u.values, state.v.values
        assert u.max() - u.min() < 1e-10
        assert v.max() - v.min() < 1e-10
        assert abs(u.mean() - expected[0, index]) < 1e-6
        assert abs(v.mean() - expected[1, index]) < 1e-6


def test_step__trivial_state_in_persistence_regime__stays_fixed():
    params = ModelParams(D=1.0, chi=1.0, r=2.0, a=1.0, f=0.5)
    grid = Grid(n_x=TINY_N_X)
    f = params.f
    dt = max_stable_dt(grid, params, 0.9)
    state = State.constant(grid, 0.0, f)
    while state.t < 10:
        state = step(state, params, dt)
        assert np.abs(state.u.values).max() <= 1e-10
        assert np.abs(state.v.values - f).max() <= 1e-10


def test_field_spec__unknown_kind__raises():
    with pytest.raises(ConfigurationError, match="Unknown initial condition kind"):
        FieldSpec(kind="gaussian")


def test_field_spec__symbolic_base__resolved(persistence_params, grid_1d):
    u_star, v_star = coexistence_values(persistence_params)
    spec = FieldSpec(kind="cosine_perturbation", base="u*", amplitude=0.1, relative=True)
    values = spec.build(grid_1d, persistence_params)
    (x,) = grid_1d.centers()
    np.testing.assert_allclose(values, u_star * (1 + 0.1 * np.cos(np.pi * x)))
    assert FieldSpec(base="v*").build(grid_1d, persistence_params)[0] == v_star


def test_field_spec__coexistence_base_in_extinction__raises(extinction_params, grid_1d):
    with pytest.raises(ConfigurationError, match="needs r > f"):
        FieldSpec(base="u*").build(grid_1d, extinction_params)


def test_field_spec__random__reproducible(grid_2d, persistence_params):
    spec = FieldSpec(kind="random_perturbation", base=1.0, amplitude=0.2)
    first = spec.build(grid_2d, persistence_params, seed=5)
    second = spec.build(grid_2d, persistence_params, seed=5)
    other = spec.build(grid_2d, persistence_params, seed=6)
    np.testing.assert_array_equal(first, second)
    assert not np.array_equal(first, other)
    assert np.all(np.abs(first - 1.0) <= 0.2)


def test_initial_state__negative_data__configuration_error(grid_1d, persistence_params):
    config = SimConfig(
        params=persistence_params,
        grid=grid_1d,
        initial=InitialCondition(u=FieldSpec(base=-1.0)),
    )
    with pytest.raises(ConfigurationError, match="Invalid initial condition"):
        initial_state(config)


@pytest.mark.parametrize(
    "kwargs",
    (
        {"t_end": 0.0},
        {"steady_tol": 0.0},
        {"cfl_safety": 1.0},
        {"dt_init": -1.0},
        {"monitor_every": 0},
        {"method": "midpoint"},
    ),
)
def test_sim_config__invalid__raises(kwargs, grid_1d, persistence_params):
    with pytest.raises(ConfigurationError):
        SimConfig(params=persistence_params, grid=grid_1d, **kwargs)


def test_sim_config_from_dict__round_trips(grid_2d, persistence_params):
    config = SimConfig(params=persistence_params, grid=grid_2d, t_end=3.0, seed=2)
    assert SimConfig.from_dict(config.as_dict(), seed=2) == config


def test_simulate__trivial_data__steady_immediately(grid_1d, persistence_params):
    config = SimConfig(
        params=persistence_params,
        grid=grid_1d,
        initial=InitialCondition(u=FieldSpec(base=0.0), v=FieldSpec(base="f")),
    )
    trajectory = simulate(config)
    assert trajectory.termination == Termination.STEADY
    assert trajectory.steps == 0
    assert trajectory.times == [0.0]


def test_simulate__t_end__reached_exactly(grid_1d, persistence_params):
    config = SimConfig(
        params=persistence_params,
        grid=grid_1d,
        initial=InitialCondition(
            u=FieldSpec(kind="cosine_perturbation", base="u*", amplitude=0.05),
            v=FieldSpec(base="v*"),
        ),
        t_end=0.37,
        monitor_every=7,
    )
    trajectory = simulate(config)
    assert trajectory.termination == Termination.T_END
    assert trajectory.final_state.t == pytest.approx(0.37, abs=1e-12)
    times = trajectory.times
    assert all(t1 > t0 for t0, t1 in zip(times, times[1:]))
    assert times[-1] == trajectory.final_state.t


def test_simulate__error__carries_trajectory(grid_1d, persistence_params, monkeypatch):
    from chemolab import model

    calls = {"n": 0}
    accept = model._accept

    def failing_accept(stepper, pair, t):
        calls["n"] += 1
        if calls["n"] > 3:
            raise BlowUpError("Forced", t=t)
        return accept(stepper, pair, t)

    monkeypatch.setattr(model, "_accept", failing_accept)
    config = SimConfig(
        params=persistence_params,
        grid=grid_1d,
        initial=InitialCondition(
            u=FieldSpec(kind="cosine_perturbation", base="u*", amplitude=0.05),
            v=FieldSpec(base="v*"),
        ),
        monitor_every=1,
    )
    with pytest.raises(SimulationError) as excinfo:
        simulate(config)
    trajectory = excinfo.value.trajectory
    assert trajectory.termination == Termination.BLOW_UP
    assert trajectory.steps == 3
    assert len(trajectory.samples) == 4
    assert trajectory.final_state.t == trajectory.samples[-1].t
    assert "t=" in str(excinfo.value)


def _extinction_config(n_x: int, **time) -> SimConfig:
    return SimConfig.from_dict(
        {
            "params": EXTINCTION_PARAMS,
            "grid": {"n_x": n_x},
            "initial": {
                "u": {
                    "kind": "cosine_perturbation",
                    "base": 0.5,
                    "amplitude": 0.1,
                    "m": 2,
                },
                "v": {"base": "f"},
            },
            "time": {"t_end": 50.0, **time},
        }
    )


def _persistence_config(n_x: int, **time) -> SimConfig:
    return SimConfig.from_dict(
        {
            "params": PERSISTENCE_PARAMS,
            "grid": {"n_x": n_x},
            "initial": {
                "u": {
                    "kind": "cosine_perturbation",
                    "base": "u*",
                    "amplitude": 0.1,
                    "relative": True,
                },
                "v": {"base": "v*"},
            },
            "time": {"t_end": 100.0, **time},
        }
    )


def _final_deviation(samples: list[Sample]) -> float:
    return samples[-1].linf_u_dev + samples[-1].linf_v_dev


def test_simulate__extinction__converges_to_trivial_state():
    trajectory = simulate(_extinction_config(SMALL_N_X))
    assert trajectory.termination in (Termination.STEADY, Termination.T_END)
    assert trajectory.target.u_val == 0.0
    assert _final_deviation(trajectory.samples) < 1e-4
    assert min(sample.min_u for sample in trajectory.samples) >= 0


def test_simulate__persistence__converges_to_coexistence_state():
    trajectory = simulate(_persistence_config(SMALL_N_X))
    u_star, _ = coexistence_values(ModelParams(**PERSISTENCE_PARAMS))
    assert trajectory.target.u_val == pytest.approx(u_star)
    assert _final_deviation(trajectory.samples) < 1e-4


@pytest.mark.slow
def test_simulate__extinction_full_grid__converges():
    trajectory = simulate(_extinction_config(128))
    assert _final_deviation(trajectory.samples) < 1e-4
    assert trajectory.final_state.t < 50


@pytest.mark.slow
def test_simulate__persistence_full_grid__converges():
    trajectory = simulate(_persistence_config(128))
    assert _final_deviation(trajectory.samples) < 1e-4


@pytest.mark.slow
def test_simulate__extinction_refinement__second_order():
    norms = []
    for n_x in (32, 64, 128):
        config = _extinction_config(n_x, t_end=1.0, steady_tol=1e-14)
        norms.append(simulate(config).samples[-1].linf_u_dev)
    order = math.log2(abs(norms[0] - norms[1]) / abs(norms[1] - norms[2]))
    assert 1.5 <= order <= 2.5
