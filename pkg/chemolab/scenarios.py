"""
Canonical scenarios, sweeps and re-checks built on the library modules
"""
from __future__ import annotations

import copy
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import settings
from .config import RunConfig, apply_overrides, load_document, merge, set_key
from .equilibria import (
    Regime,
    SteadyState,
    classify_local_stability,
    homogeneous_steady_states,
)
from .exceptions import (
    ChemolabException,
    ConfigurationError,
    NumericalError,
    RegimeError,
    SimulationError,
    UndefinedFunctionalError,
)
from .lyapunov import (
    DecayReport,
    LyapunovConstants,
    functional,
    monitor_decay,
    select_constants_case1,
    select_constants_case2,
)
from .model import ModelParams, State, Termination, Trajectory, simulate
from .output import (
    ensure_dir,
    load_snapshots,
    save_snapshots,
    write_summary_json,
    write_sweep_csv,
    write_trajectory_csv,
)
from .thresholds import ThresholdReport, feasible_k, positive_roots, threshold_report


logger = logging.getLogger(__name__)

#: Max-norm distance below which a run counts as converged to a steady state
CONVERGENCE_TOL = 1e-4

#: Spatial variance of u above which a steady run counts as patterned
PATTERN_VARIANCE = 1e-4

#: Search box for parameters with three positive threshold roots
PATTERN_A_VALUES = (1.0, 2.0, 4.0)
PATTERN_CHI_VALUES = (4.0, 6.0, 8.0, 10.0)

SCENARIOS: dict[str, dict[str, Any]] = {
    "extinction": {
        "params": {"D": 1.0, "chi": 1.0, "a": 0.5, "r": 1.0, "f": 2.0},
        "grid": {"n_x": 128},
        "initial": {
            "u": {
                "kind": "cosine_perturbation",
                "base": 0.5,
                "amplitude": 0.1,
                "m": 2,
            },
            "v": {"kind": "constant", "base": "f"},
        },
        "time": {"t_end": 50.0},
    },
    "persistence": {
        "params": {"D": 1.0, "chi": 1.0, "a": 1.0, "r": 2.0, "f": 0.0},
        "grid": {"n_x": 128},
        "initial": {
            "u": {
                "kind": "cosine_perturbation",
                "base": "u*",
                "amplitude": 0.1,
                "relative": True,
                "m": 1,
            },
            "v": {"kind": "constant", "base": "v*"},
        },
        "time": {"t_end": 100.0},
    },
    "taxis-free": {
        "params": {"D": 1.0, "chi": 0.0, "a": 1.0, "r": 2.0, "f": 0.0},
        "grid": {"n_x": 64},
        "initial": {
            "u": {
                "kind": "cosine_perturbation",
                "base": "u*",
                "amplitude": 0.1,
                "relative": True,
                "m": 1,
            },
            "v": {"kind": "constant", "base": "v*"},
        },
        "time": {"t_end": 100.0},
    },
    "pattern": {
        "params": {"D": 1.0, "chi": 6.0, "a": 4.0, "r": "auto", "f": 0.5},
        "grid": {"n_x": 64},
        "initial": {
            "u": {
                "kind": "random_perturbation",
                "base": "u*",
                "amplitude": 0.05,
                "relative": True,
            },
            "v": {"kind": "constant", "base": "v*"},
        },
        "time": {"t_end": 200.0},
        "seed": 20,
    },
}


def scenario_document(name: str) -> dict[str, Any]:
    if name not in SCENARIOS:
        raise ConfigurationError(
            f"Unknown scenario {name!r}, expected one of {', '.join(SCENARIOS)}"
        )
    document = copy.deepcopy(SCENARIOS[name])
    document["scenario"] = name
    return document


def build_run_config(
    scenario: str | None = None,
    config_path: Path | None = None,
    overrides: Sequence[str] = (),
    out: Path | None = None,
    seed: int | None = None,
) -> RunConfig:
    """
    Layer preset, config file, ``--set`` overrides and flags into a RunConfig
    """
    file_document = load_document(config_path) if config_path else {}
    document: dict[str, Any] = {}
    if scenario:
        document = scenario_document(scenario)
    elif file_document.get("scenario") in SCENARIOS:
        # A file may name a preset to start from, or any other tag
        document = scenario_document(file_document["scenario"])

    document = merge(document, file_document)
    if scenario:
        document["scenario"] = scenario
    document = apply_overrides(document, overrides)
    if seed is not None:
        document["seed"] = seed
    if out is not None:
        document["out"] = str(out)
    return RunConfig.from_dict(document)


@dataclass
class RunSummary:
    scenario: str
    params: dict[str, float]
    regime: str | None = None
    trivial_stability: str | None = None
    coexistence_stability: str | None = None
    r_c: float | None = None
    certified_feasible: bool | None = None
    case1_feasible: bool | None = None
    feasible_k: list[float | None] | None = None
    constants: dict[str, Any] | None = None
    decay: dict[str, Any] | None = None
    termination: str | None = None
    t_final: float | None = None
    steps: int = 0
    converged_to: str | None = None
    linf_u_dev: float | None = None
    linf_v_dev: float | None = None
    l2_u_dev: float | None = None
    l2_v_dev: float | None = None
    variance_u: float | None = None
    pattern: str | None = None
    wall_time: float = 0.0
    error: str | None = None
    notes: list[str] = field(default_factory=list)
    search_log: list[dict[str, Any]] | None = None

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class PatternSearch:
    params: ModelParams | None
    window: tuple[float, float] | None
    log: list[dict[str, Any]] = field(default_factory=list)


def find_pattern_parameters(
    base: ModelParams,
    a_values: Sequence[float] = PATTERN_A_VALUES,
    chi_values: Sequence[float] = PATTERN_CHI_VALUES,
) -> PatternSearch:
    """
    First (a, chi) with three positive threshold roots r1 < r2 < r3, and r set to
    the geometric mean of r2 and r3

    The base's own (a, chi) are tried before the search box. D and f are kept.
    """
    candidates = [(base.a, base.chi)] + [
        (a, chi) for a in a_values for chi in chi_values if (a, chi) != (base.a, base.chi)
    ]
    search = PatternSearch(params=None, window=None)
    for a, chi in candidates:
        entry: dict[str, Any] = {"a": a, "chi": chi}
        search.log.append(entry)
        try:
            roots = positive_roots(base.replace(a=a, chi=chi))
        except NumericalError as e:
            entry.update(roots=None, accepted=False, reason=str(e))
            continue
        entry["roots"] = roots
        if len(roots) != 3:
            entry.update(accepted=False, reason=f"{len(roots)} positive roots")
            continue
        r = math.sqrt(roots[1] * roots[2])
        if r <= base.f:
            entry.update(accepted=False, reason=f"window rate {r:.6g} not above f")
            continue
        entry.update(accepted=True, r=r)
        search.params = base.replace(a=a, chi=chi, r=r)
        search.window = (roots[1], roots[2])
        logger.info("Pattern parameters found: a=%g chi=%g r=%g", a, chi, r)
        break
    else:
        logger.warning("No three-root parameters in the pattern search box")
    return search


def select_constants(params: ModelParams) -> LyapunovConstants:
    """
    Lyapunov constants for the case matching the parameters' regime
    """
    regime = classify_local_stability(params).regime
    if regime == Regime.EXTINCTION:
        return select_constants_case1(params)
    if regime == Regime.COEXISTENCE:
        return select_constants_case2(params, feasible_k(params.r, params))
    raise RegimeError(f"No Lyapunov functional applies when r = f = {params.f}")


def _deviation(state: State, steady: SteadyState) -> float:
    return float(
        np.abs(state.u.values - steady.u_val).max()
        + np.abs(state.v.values - steady.v_val).max()
    )


def _converged_to(state: State, params: ModelParams) -> str | None:
    for steady in homogeneous_steady_states(params):
        if steady.admissible and _deviation(state, steady) < CONVERGENCE_TOL:
            return str(steady)
    return None


def _pattern_verdict(trajectory: Trajectory, variance: float) -> str:
    if trajectory.termination != Termination.STEADY:
        return "inconclusive"
    return "patterned" if variance > PATTERN_VARIANCE else "homogeneous"


def _summarise_thresholds(summary: RunSummary, report: ThresholdReport):
    summary.r_c = report.r_c
    summary.certified_feasible = report.certified_feasible
    summary.case1_feasible = report.case1_feasible
    if report.feasible_interval is not None:
        summary.feasible_k = report.feasible_interval.as_list()
    summary.notes.extend(report.notes)


def run_scenario(config: RunConfig, write: bool = True) -> RunSummary:
    """
    Classify, certify and simulate one configuration

    Regime and hypothesis problems with the Lyapunov constants are recorded in the
    summary and the run continues without a decay check.
    """
    started = time.perf_counter()
    search: PatternSearch | None = None
    if config.auto_r:
        search = find_pattern_parameters(config.sim.params)
        if search.params is None:
            summary = RunSummary(
                scenario=config.scenario,
                params=config.sim.params.as_dict(),
                pattern="not-found",
                search_log=search.log,
            )
            summary.notes.append("No three-root parameters found, simulation skipped")
            summary.wall_time = time.perf_counter() - started
            _write(config, summary, None, write)
            return summary
        config = replace(config, sim=replace(config.sim, params=search.params), auto_r=False)

    params = config.sim.params
    stability = classify_local_stability(params)
    summary = RunSummary(
        scenario=config.scenario,
        params=params.as_dict(),
        regime=stability.regime.value,
        trivial_stability=stability.trivial.value,
        coexistence_stability=stability.coexistence.value,
        search_log=search.log if search else None,
    )
    _summarise_thresholds(summary, threshold_report(params))

    constants: LyapunovConstants | None = None
    if config.lyapunov:
        try:
            constants = select_constants(params)
        except ChemolabException as e:
            logger.warning("No certified decay constant: %s", e)
            summary.notes.append(f"Lyapunov constants unavailable: {e}")
        else:
            summary.constants = constants.as_dict()

    monitor = functional(constants.case, params, constants.k) if constants else None
    try:
        trajectory = simulate(
            config.sim, functional=monitor, keep_states=config.save_snapshots
        )
    except SimulationError as e:
        if e.trajectory is None:
            raise
        trajectory = e.trajectory
        summary.error = str(e)

    state = trajectory.final_state
    last = trajectory.samples[-1]
    summary.termination = trajectory.termination.value if trajectory.termination else None
    summary.t_final = state.t if state else last.t
    summary.steps = trajectory.steps
    summary.linf_u_dev = last.linf_u_dev
    summary.linf_v_dev = last.linf_v_dev
    summary.l2_u_dev = last.l2_u_dev
    summary.l2_v_dev = last.l2_v_dev
    if state is not None:
        summary.converged_to = _converged_to(state, params)
        summary.variance_u = float(np.var(state.u.values))

    if constants is not None:
        decay = monitor_decay(trajectory.samples, constants.case, constants)
        summary.decay = decay.as_dict()

    if config.scenario == "pattern" and summary.variance_u is not None:
        summary.pattern = _pattern_verdict(trajectory, summary.variance_u)

    summary.wall_time = time.perf_counter() - started
    logger.info(
        "Scenario %s finished: %s, converged to %s",
        config.scenario,
        summary.termination,
        summary.converged_to,
    )
    _write(config, summary, trajectory, write)
    return summary


def _write(
    config: RunConfig, summary: RunSummary, trajectory: Trajectory | None, write: bool
):
    if not write or config.out is None:
        return
    out = ensure_dir(config.out)
    if trajectory is not None:
        write_trajectory_csv(out / settings.FILENAME_CSV, trajectory.samples)
        if config.save_snapshots and trajectory.states:
            save_snapshots(out / settings.FILENAME_SNAPSHOTS, trajectory.states)
    write_summary_json(out / settings.FILENAME_SUMMARY, summary.as_dict())


def run_thresholds(params: ModelParams) -> ThresholdReport:
    return threshold_report(params)


# Sweeps

SWEEP_COLUMNS = (
    "index",
    "parameter",
    "value",
    "seed",
    "regime",
    "r_c",
    "certified_feasible",
    "case1_feasible",
    "feasible_k_lower",
    "feasible_k_upper",
    "c",
    "termination",
    "converged_to",
    "linf_u_dev",
    "linf_v_dev",
    "decay_violations",
    "variance_u",
    "error",
)


def _thresholds_summary(config: RunConfig) -> RunSummary:
    params = config.sim.params
    stability = classify_local_stability(params)
    summary = RunSummary(
        scenario=config.scenario,
        params=params.as_dict(),
        regime=stability.regime.value,
        trivial_stability=stability.trivial.value,
        coexistence_stability=stability.coexistence.value,
    )
    _summarise_thresholds(summary, threshold_report(params))
    return summary


def _run_point(document: dict[str, Any], simulate_point: bool) -> RunSummary:
    """
    Evaluate one sweep point; runs in a worker process
    """
    try:
        config = RunConfig.from_dict(document)
        if simulate_point:
            return run_scenario(config, write=False)
        return _thresholds_summary(config)
    except ChemolabException as e:
        logger.warning("Sweep point failed: %s", e)
        return RunSummary(
            scenario=str(document.get("scenario", "custom")),
            params={
                key: val
                for key, val in document.get("params", {}).items()
                if isinstance(val, (int, float))
            },
            error=str(e),
        )


def sweep_row(
    index: int, parameter: str, value: float, seed: int, summary: RunSummary
) -> dict[str, Any]:
    feasible = summary.feasible_k or [None, None]
    return {
        "index": index,
        "parameter": parameter,
        "value": value,
        "seed": seed,
        "regime": summary.regime,
        "r_c": summary.r_c,
        "certified_feasible": summary.certified_feasible,
        "case1_feasible": summary.case1_feasible,
        "feasible_k_lower": feasible[0],
        "feasible_k_upper": feasible[1],
        "c": summary.constants["c"] if summary.constants else None,
        "termination": summary.termination,
        "converged_to": summary.converged_to,
        "linf_u_dev": summary.linf_u_dev,
        "linf_v_dev": summary.linf_v_dev,
        "decay_violations": summary.decay["violations"] if summary.decay else None,
        "variance_u": summary.variance_u,
        "error": summary.error,
    }


def default_workers() -> int:
    """
    Sweep worker cap from CHEMO_THREADS, or the CPU count when unset
    """
    if not settings.THREADS:
        return os.cpu_count() or 1
    try:
        threads = int(settings.THREADS)
    except ValueError:
        raise ConfigurationError(
            f"CHEMO_THREADS must be an integer, not {settings.THREADS!r}"
        )
    if threads < 1:
        raise ConfigurationError(f"CHEMO_THREADS must be at least 1, not {threads}")
    return threads


def run_sweep(config: RunConfig, workers: int | None = None) -> list[RunSummary]:
    """
    Run every point of the sweep, in parallel when more than one worker is allowed

    Point ``i`` uses seed ``seed + i``, so the combined CSV does not depend on the
    number of workers.
    """
    spec = config.sweep
    if spec is None:
        raise ConfigurationError("Config has no sweep section")

    base = copy.deepcopy(config.document or config.as_dict())
    base.pop("sweep", None)
    base.pop("out", None)
    base.pop("version", None)

    points = spec.points()
    documents = []
    for index, value in enumerate(points):
        document = set_key(base, spec.key, value)
        document["seed"] = config.seed + index
        documents.append(document)

    if workers is None:
        workers = default_workers()
    workers = max(1, min(workers, len(points)))
    logger.info("Sweeping %s over %d points with %d workers", spec.key, len(points), workers)

    if workers == 1:
        summaries = [_run_point(document, spec.simulate) for document in documents]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            summaries = list(
                executor.map(
                    _run_point, documents, [spec.simulate] * len(documents)
                )
            )

    if config.out is not None:
        rows = [
            sweep_row(index, spec.key, value, config.seed + index, summary)
            for index, (value, summary) in enumerate(zip(points, summaries))
        ]
        out = ensure_dir(config.out)
        write_sweep_csv(out / settings.FILENAME_SWEEP, SWEEP_COLUMNS, rows)
    return summaries


# Stored trajectories


@dataclass(frozen=True)
class Checkpoint:
    t: float
    E: float | None
    F: float | None


def lyapunov_check(config: RunConfig, snapshots_path: Path) -> DecayReport:
    """
    Recompute the decay report from stored snapshots
    """
    t, u, v = load_snapshots(snapshots_path)
    params, grid = config.sim.params, config.sim.grid
    constants = select_constants(params)
    evaluate = functional(constants.case, params, constants.k)

    checkpoints = []
    for t_i, u_i, v_i in zip(t, u, v):
        state = State.from_arrays(grid, u_i, v_i, float(t_i))
        try:
            E, F = evaluate(state)
        except UndefinedFunctionalError:
            checkpoints.append(Checkpoint(float(t_i), None, None))
        else:
            checkpoints.append(Checkpoint(float(t_i), E, F))
    return monitor_decay(checkpoints, constants.case, constants)
