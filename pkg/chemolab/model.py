"""
Repulsive Keller-Segel system with logistic growth, lethality and constant supply

    u_t = D lap(u) + chi div(u grad v) + r u (1 - u) - u v
    v_t = lap(v) + a u - v + f

with zero-flux boundaries.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Any, Callable

import numpy as np

from .exceptions import (
    BlowUpError,
    ConfigurationError,
    InvalidFieldError,
    NegativityError,
    ShapeError,
    SimulationError,
    UndefinedFunctionalError,
)
from .grid import Array, Field, Grid, Stencil
from .settings import TOL_NEG


if TYPE_CHECKING:
    from .equilibria import SteadyState

logger = logging.getLogger(__name__)

#: Guards the CFL bound against division by zero
CFL_EPSILON = 1e-12

#: Magnitude beyond which the solution is treated as blowing up
BLOWUP_THRESHOLD = 1e8

#: Integrators accepted by ``step``
METHODS = ("rk4", "euler")

#: State -> (E, F); raises UndefinedFunctionalError where E is not defined
Functional = Callable[["State"], tuple[float, float]]


def _only_known(name: str, data: dict[str, Any], known: set[str]):
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"Unexpected {name} values {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class ModelParams:
    #: Diffusion coefficient of the population
    D: float = 1.0

    #: Chemotactic sensitivity
    chi: float = 1.0

    #: Logistic growth rate
    r: float = 1.0

    #: Self-production rate of the chemorepellent
    a: float = 0.0

    #: Constant external supply
    f: float = 0.0

    def __post_init__(self):
        for name in ("D", "chi", "r", "a", "f"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"Parameter {name} must be finite")
        if self.D <= 0 or self.r <= 0:
            raise ConfigurationError("Parameters D and r must be positive")
        if self.chi < 0 or self.a < 0 or self.f < 0:
            raise ConfigurationError("Parameters chi, a and f must be non-negative")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelParams:
        _only_known("params", data, {"D", "chi", "r", "a", "f"})
        return cls(**{key: float(val) for key, val in data.items()})

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def replace(self, **changes: float) -> ModelParams:
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class State:
    """
    The (u, v) fields at time t

    Densities in [-TOL_NEG, 0) are clamped to zero; anything more negative is invalid.
    """

    u: Field
    v: Field
    t: float = 0.0

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise ShapeError("u and v must share a grid")
        u_min = self.u.min()
        if u_min < -TOL_NEG:
            raise InvalidFieldError(f"Density u has negative value {u_min:.3g}")
        if u_min < 0:
            object.__setattr__(self, "u", self.u.with_values(np.maximum(self.u.values, 0)))

    @classmethod
    def from_arrays(cls, grid: Grid, u: Array, v: Array, t: float = 0.0) -> State:
        return cls(Field(u, grid), Field(v, grid), t)

    @classmethod
    def constant(cls, grid: Grid, u: float, v: float, t: float = 0.0) -> State:
        return cls(Field.constant(grid, u), Field.constant(grid, v), t)

    @property
    def grid(self) -> Grid:
        return self.u.grid


FIELD_KINDS = ("constant", "cosine_perturbation", "random_perturbation")


@dataclass(frozen=True)
class FieldSpec:
    """
    Initial data for one component

    ``base`` is a number or one of ``"u*"``, ``"v*"``, ``"f"``. With ``relative`` set
    the amplitude is multiplied by the base.
    """

    kind: str = "constant"
    base: float | str = 0.0
    amplitude: float = 0.0
    relative: bool = False
    m: int = 1
    p: int = 0
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ConfigurationError(
                f"Unknown initial condition kind {self.kind!r},"
                f" expected one of {', '.join(FIELD_KINDS)}"
            )
        if isinstance(self.base, str) and self.base not in ("u*", "v*", "f"):
            raise ConfigurationError(f"Unknown symbolic base {self.base!r}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> FieldSpec:
        _only_known("initial condition", data, set(cls.__dataclass_fields__))
        return cls(**data)

    def resolve_base(self, params: ModelParams) -> float:
        if not isinstance(self.base, str):
            return float(self.base)
        if self.base == "f":
            return params.f

        # Avoid import loop
        from .equilibria import coexistence_values

        if params.r <= params.f:
            raise ConfigurationError(
                f"Initial base {self.base} needs r > f (r={params.r}, f={params.f})"
            )
        u_star, v_star = coexistence_values(params)
        return u_star if self.base == "u*" else v_star

    def build(self, grid: Grid, params: ModelParams, seed: int | None = None) -> Array:
        base = self.resolve_base(params)
        amplitude = self.amplitude * base if self.relative else self.amplitude
        values = np.full(grid.shape, base)
        if self.kind == "cosine_perturbation":
            centers = grid.centers()
            shape = np.cos(self.m * np.pi * centers[0] / grid.length_x)
            if grid.dim == 2:
                shape = shape * np.cos(self.p * np.pi * centers[1] / grid.length_y)
            values = values + amplitude * shape
        elif self.kind == "random_perturbation":
            rng = np.random.default_rng(self.seed if self.seed is not None else seed)
            values = values + rng.uniform(-amplitude, amplitude, size=grid.shape)
        return values


@dataclass(frozen=True)
class InitialCondition:
    u: FieldSpec = field(default_factory=FieldSpec)
    v: FieldSpec = field(default_factory=lambda: FieldSpec(base="f"))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> InitialCondition:
        _only_known("initial", data, {"u", "v"})
        specs = {key: FieldSpec.from_dict(val) for key, val in data.items()}
        return cls(**specs)

    def as_dict(self) -> dict[str, Any]:
        return {"u": asdict(self.u), "v": asdict(self.v)}


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    grid: Grid
    initial: InitialCondition = field(default_factory=InitialCondition)
    dt_init: float = 1e-3
    t_end: float = 50.0
    cfl_safety: float = 0.9
    steady_tol: float = 1e-8

    #: Steps between monitor samples
    monitor_every: int = 100

    method: str = "rk4"
    seed: int = 0

    def __post_init__(self):
        if not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")
        if not self.steady_tol > 0:
            raise ConfigurationError("steady_tol must be positive")
        if not 0 < self.cfl_safety < 1:
            raise ConfigurationError("cfl_safety must lie in (0, 1)")
        if not self.dt_init > 0:
            raise ConfigurationError("dt_init must be positive")
        if self.monitor_every < 1:
            raise ConfigurationError("monitor_every must be at least 1")
        if self.method not in METHODS:
            raise ConfigurationError(f"Unknown method {self.method!r}")

    TIME_KEYS = ("dt_init", "t_end", "cfl_safety", "steady_tol", "monitor_every", "method")

    @classmethod
    def from_dict(cls, data: dict[str, Any], seed: int = 0) -> SimConfig:
        """
        Build from the ``params``, ``grid``, ``initial`` and ``time`` sections
        """
        _only_known("simulation", data, {"params", "grid", "initial", "time"})
        time = data.get("time", {})
        _only_known("time", time, set(cls.TIME_KEYS))
        return cls(
            params=ModelParams.from_dict(data.get("params", {})),
            grid=Grid.from_dict(data.get("grid", {"n_x": 64})),
            initial=InitialCondition.from_dict(data.get("initial", {})),
            seed=seed,
            **time,
        )

    def as_dict(self) -> dict[str, Any]:
        return {
            "params": self.params.as_dict(),
            "grid": self.grid.as_dict(),
            "initial": self.initial.as_dict(),
            "time": {key: getattr(self, key) for key in self.TIME_KEYS},
        }


class Termination(str, Enum):
    STEADY = "steady"
    T_END = "t_end"
    BLOW_UP = "blow-up"
    NEGATIVITY = "negativity"


@dataclass(frozen=True)
class Sample:
    t: float
    linf_u_dev: float
    linf_v_dev: float
    l2_u_dev: float
    l2_v_dev: float
    mass_u: float
    min_u: float
    E: float | None = None
    F: float | None = None
    dE_dt_estimate: float | None = None

    COLUMNS = (
        "t",
        "linf_u_dev",
        "linf_v_dev",
        "l2_u_dev",
        "l2_v_dev",
        "mass_u",
        "min_u",
        "E",
        "F",
        "dE_dt_estimate",
    )

    def as_row(self) -> list[float | None]:
        return [getattr(self, column) for column in self.COLUMNS]


@dataclass
class Trajectory:
    target: SteadyState
    samples: list[Sample] = field(default_factory=list)
    termination: Termination | None = None
    final_state: State | None = None

    #: States at each sample, only kept on request
    states: list[State] = field(default_factory=list)

    steps: int = 0
    rhs_norm: float = math.inf

    @property
    def times(self) -> list[float]:
        return [sample.t for sample in self.samples]


def max_stable_dt(grid: Grid, params: ModelParams, cfl_safety: float) -> float:
    """
    Diffusive step bound; the v equation always diffuses with unit rate
    """
    return cfl_safety * grid.h_min**2 / (2 * grid.dim * max(params.D, 1.0) + CFL_EPSILON)


class _Stepper:
    """
    Explicit steps on the stacked pair ``[u, v]`` with buffers reused between steps
    """

    def __init__(self, grid: Grid, params: ModelParams, method: str = "rk4"):
        self.grid = grid
        self.params = params
        self.method = method
        self.stencil = Stencil(grid)
        shape = self.stencil.shape
        self.slopes = [np.empty(shape) for _ in range(4)]
        self.stage = np.empty(shape)
        self.scratch = np.empty(shape)

    def rhs(self, pair: Array, out: Array) -> Array:
        p = self.params
        u, v = pair[0], pair[1]
        du, dv = out[0], out[1]

        # r u (1 - u) - u v = u (r - r u - v)
        np.multiply(u, -p.r, out=du)
        np.add(du, p.r, out=du)
        np.subtract(du, v, out=du)
        np.multiply(du, u, out=du)

        np.multiply(u, p.a, out=dv)
        np.subtract(dv, v, out=dv)
        np.add(dv, p.f, out=dv)
        return self.stencil.add_transport(pair, p.D, p.chi, out)

    def advance(self, pair: Array, dt: float) -> tuple[Array, float]:
        """
        One step from ``pair``; also returns the max-norm of the rhs at the start
        """
        k1, k2, k3, k4 = self.slopes
        self.rhs(pair, k1)
        norm = float(np.abs(k1, out=self.scratch).max())
        if self.method == "euler":
            new = k1 * dt
            np.add(new, pair, out=new)
            return new, norm

        stage = self.stage
        for slope, target, weight in ((k1, k2, 0.5), (k2, k3, 0.5), (k3, k4, 1.0)):
            np.multiply(slope, weight * dt, out=stage)
            np.add(stage, pair, out=stage)
            self.rhs(stage, target)
        new = np.add(k2, k3)
        np.multiply(new, 2.0, out=new)
        np.add(new, k1, out=new)
        np.add(new, k4, out=new)
        np.multiply(new, dt / 6, out=new)
        np.add(new, pair, out=new)
        return new, norm

    def peak(self, pair: Array) -> float:
        return float(np.abs(pair, out=self.scratch).max())


def _accept(stepper: _Stepper, pair: Array, t: float):
    """
    Validate a stepped pair in place, or raise if the step failed

    Densities in [-TOL_NEG, 0) are clamped to zero.
    """
    peak = stepper.peak(pair)
    if not math.isfinite(peak):
        raise BlowUpError("Solution became non-finite", t=t)
    if peak > BLOWUP_THRESHOLD:
        raise BlowUpError(f"Solution exceeded {BLOWUP_THRESHOLD:g}", t=t)
    u = pair[0]
    u_min = u.min()
    if u_min < -TOL_NEG:
        raise NegativityError(f"Density reached {u_min:.3g} below zero, reduce dt", t=t)
    if u_min < 0:
        np.maximum(u, 0.0, out=u)


def _stack(state: State) -> Array:
    return np.stack([state.u.values, state.v.values])


def _unstack(grid: Grid, pair: Array, t: float) -> State:
    return State(Field(pair[0], grid), Field(pair[1], grid), t)


def rhs(state: State, params: ModelParams) -> tuple[Field, Field]:
    grid = state.grid
    stepper = _Stepper(grid, params)
    out = stepper.rhs(_stack(state), np.empty(stepper.stencil.shape))
    if not np.all(np.isfinite(out)):
        raise BlowUpError("Right-hand side became non-finite", t=state.t)
    return Field(out[0], grid), Field(out[1], grid)


def step(
    state: State,
    params: ModelParams,
    dt: float,
    cfl_safety: float = 0.9,
    method: str = "rk4",
) -> State:
    """
    Advance by one explicit step, classical RK4 unless ``method="euler"``
    """
    if method not in METHODS:
        raise ConfigurationError(f"Unknown method {method!r}")
    limit = max_stable_dt(state.grid, params, cfl_safety)
    if not 0 < dt <= limit:
        raise ConfigurationError(f"Time step {dt:.3g} outside (0, {limit:.3g}]")
    stepper = _Stepper(state.grid, params, method)
    pair, _ = stepper.advance(_stack(state), dt)
    _accept(stepper, pair, state.t + dt)
    return _unstack(state.grid, pair, state.t + dt)


def initial_state(config: SimConfig) -> State:
    grid, params = config.grid, config.params
    u = config.initial.u.build(grid, params, seed=config.seed)
    v = config.initial.v.build(grid, params, seed=config.seed + 1)
    try:
        return State.from_arrays(grid, u, v)
    except InvalidFieldError as e:
        raise ConfigurationError(f"Invalid initial condition: {e}") from e


class _Monitor:
    """
    Builds samples against a fixed target steady state
    """

    def __init__(
        self,
        trajectory: Trajectory,
        functional: Functional | None,
        keep_states: bool,
    ):
        self.trajectory = trajectory
        self.functional = functional
        self.keep_states = keep_states
        self.warned_v = False
        self.last_E: tuple[float, float] | None = None

    def record(self, state: State):
        grid = state.grid
        target = self.trajectory.target
        u, v = state.u.values, state.v.values
        du = u - target.u_val
        dv = v - target.v_val

        if not self.warned_v and v.min() < 0:
            logger.warning("Concentration v went negative (%.3g) at t=%g", v.min(), state.t)
            self.warned_v = True

        E = F = rate = None
        if self.functional is not None:
            try:
                E, F = self.functional(state)
            except UndefinedFunctionalError as e:
                logger.debug("Functional undefined at t=%g: %s", state.t, e)
            else:
                if self.last_E is not None and state.t > self.last_E[0]:
                    t_prev, E_prev = self.last_E
                    rate = (E - E_prev) / (state.t - t_prev)
                self.last_E = (state.t, E)

        self.trajectory.samples.append(
            Sample(
                t=state.t,
                linf_u_dev=float(np.abs(du).max()),
                linf_v_dev=float(np.abs(dv).max()),
                l2_u_dev=math.sqrt(grid.integrate(du**2)),
                l2_v_dev=math.sqrt(grid.integrate(dv**2)),
                mass_u=grid.integrate(u),
                min_u=float(u.min()),
                E=E,
                F=F,
                dE_dt_estimate=rate,
            )
        )
        if self.keep_states:
            self.trajectory.states.append(state)


def simulate(
    config: SimConfig,
    functional: Functional | None = None,
    keep_states: bool = False,
) -> Trajectory:
    """
    Run until steady, t_end, or a step error

    The time step starts at ``dt_init`` clipped to the CFL bound, is halved when the
    density goes negative and grows by 10% per accepted step back up to the bound.
    Errors are re-raised with the trajectory accumulated so far attached.
    """
    # Avoid import loop
    from .equilibria import target_state

    params, grid = config.params, config.grid
    trajectory = Trajectory(target=target_state(params))
    monitor = _Monitor(trajectory, functional, keep_states)

    state = initial_state(config)
    monitor.record(state)

    dt_max = max_stable_dt(grid, params, config.cfl_safety)
    dt_floor = dt_max * 1e-10
    dt = min(config.dt_init, dt_max)
    logger.info(
        "Simulating %s on %s cells to t=%g, dt<=%.3g",
        params,
        grid.n_cells,
        config.t_end,
        dt_max,
    )

    stepper = _Stepper(grid, params, config.method)
    pair, t = _stack(state), state.t
    since_sample = 0
    try:
        while True:
            if t >= config.t_end * (1 - 1e-14):
                trajectory.termination = Termination.T_END
                break

            dt_step = min(dt, config.t_end - t)
            stepped, norm = stepper.advance(pair, dt_step)
            trajectory.rhs_norm = norm
            if norm < config.steady_tol:
                trajectory.termination = Termination.STEADY
                break

            try:
                _accept(stepper, stepped, t + dt_step)
            except NegativityError:
                dt = dt_step / 2
                logger.debug("Negative density at t=%g, halving dt to %.3g", t, dt)
                if dt < dt_floor:
                    raise
                continue

            pair, t = stepped, t + dt_step
            trajectory.steps += 1
            dt = min(dt * 1.1, dt_max)
            since_sample += 1
            if since_sample >= config.monitor_every:
                state = _unstack(grid, pair, t)
                monitor.record(state)
                since_sample = 0

    except SimulationError as e:
        trajectory.termination = (
            Termination.NEGATIVITY
            if isinstance(e, NegativityError)
            else Termination.BLOW_UP
        )
        trajectory.final_state = _unstack(grid, pair, t)
        e.trajectory = trajectory
        logger.info("Simulation stopped at t=%g: %s", t, e)
        raise

    if state.t != t:
        state = _unstack(grid, pair, t)
        monitor.record(state)
    trajectory.final_state = state
    logger.info(
        "Simulation finished (%s) at t=%g after %d steps",
        trajectory.termination.value,
        state.t,
        trajectory.steps,
    )
    return trajectory
