"""
Lyapunov functionals for both regimes and the constants certifying their decay

Extinction (f > r):
    E1 = int u + k/2 int (v - f)^2,    F1 = int u^2 + int (v - f)^2

Coexistence (r > f):
    E2 = int (u - u* - u* ln(u / u*)) + k/2 int (v - v*)^2
    F2 = int (|grad u| / u)^2 + int |grad v|^2 + int (u - u*)^2 + int (v - v*)^2

and dE/dt <= -c F along solutions for suitable k and c.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Protocol

import numpy as np
from scipy import optimize

from .equilibria import coexistence_values
from .exceptions import (
    HypothesisError,
    InfeasibleError,
    InvalidFieldError,
    RegimeError,
    UndefinedFunctionalError,
)
from .model import Functional, ModelParams, State
from .settings import TOL_NEG, U_FLOOR
from .thresholds import Interval


logger = logging.getLogger(__name__)

CASES = ("extinction", "coexistence")

#: Grid points scanned before refining the case-2 weight
K_SCAN_POINTS = 64


@dataclass(frozen=True)
class LyapunovConstants:
    case: str
    k: float

    #: Certified decay constant, c1 or c2
    c: float

    #: Young's inequality parameter, extinction case only
    eps1: float | None = None

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class QuadraticForms:
    P: np.ndarray
    S: np.ndarray


def _u_values(state: State) -> np.ndarray:
    u = state.u.values
    if u.min() < -TOL_NEG:
        raise InvalidFieldError(f"Density u has negative value {u.min():.3g}")
    return u


def _positive_u(state: State) -> np.ndarray:
    u = state.u.values
    if u.min() <= U_FLOOR:
        raise UndefinedFunctionalError(
            f"Density {u.min():.3g} at or below floor {U_FLOOR:g}, log undefined"
        )
    return u


def _coexistence(params: ModelParams) -> tuple[float, float]:
    if params.r <= params.f:
        raise RegimeError(
            f"Coexistence functionals need r > f (r={params.r}, f={params.f})"
        )
    return coexistence_values(params)


def e1(state: State, params: ModelParams, k: float) -> float:
    grid = state.grid
    u = _u_values(state)
    dv = state.v.values - params.f
    return grid.integrate(u) + 0.5 * k * grid.integrate(dv**2)


def f1(state: State, params: ModelParams) -> float:
    grid = state.grid
    u = _u_values(state)
    dv = state.v.values - params.f
    return grid.integrate(u**2) + grid.integrate(dv**2)


def e2(state: State, params: ModelParams, k: float) -> float:
    u_star, v_star = _coexistence(params)
    grid = state.grid
    u = _positive_u(state)
    du = u - u_star
    # log1p keeps the integrand accurate close to u*
    entropy = du - u_star * np.log1p(du / u_star)
    dv = state.v.values - v_star
    return grid.integrate(entropy) + 0.5 * k * grid.integrate(dv**2)


def f2(state: State, params: ModelParams) -> float:
    u_star, v_star = _coexistence(params)
    grid = state.grid
    u = _positive_u(state)
    v = state.v.values
    return (
        grid.integrate(grid.grad_sq(u) / u**2)
        + grid.integrate(grid.grad_sq(v))
        + grid.integrate((u - u_star) ** 2)
        + grid.integrate((v - v_star) ** 2)
    )


def functional(case: str, params: ModelParams, k: float) -> Functional:
    """
    The (E, F) pair for a case, as used by the simulation monitor
    """
    if case == "extinction":
        return lambda state: (e1(state, params, k), f1(state, params))
    if case == "coexistence":
        return lambda state: (e2(state, params, k), f2(state, params))
    raise ValueError(f"Unknown case {case!r}")


# Quadratic forms


def build_forms(params: ModelParams, k: float) -> QuadraticForms:
    u_star, _ = _coexistence(params)
    off_p = (1 - k * params.a) / 2
    off_s = params.chi * u_star / 2
    return QuadraticForms(
        P=np.array([[params.r, off_p], [off_p, k]]),
        S=np.array([[params.D * u_star, off_s], [off_s, k]]),
    )


def leading_minors(matrix: np.ndarray) -> tuple[float, float]:
    return (
        float(matrix[0, 0]),
        float(matrix[0, 0] * matrix[1, 1] - matrix[0, 1] * matrix[1, 0]),
    )


def sylvester_positive_definite(matrix: np.ndarray) -> bool:
    m1, m2 = leading_minors(matrix)
    return m1 > 0 and m2 > 0


def min_eigenvalue(matrix: np.ndarray) -> float:
    """
    Smaller eigenvalue of a symmetric 2x2 matrix
    """
    a, b, d = float(matrix[0, 0]), float(matrix[0, 1]), float(matrix[1, 1])
    return 0.5 * (a + d - math.hypot(a - d, 2 * b))


def check_positive_definite(forms: QuadraticForms) -> tuple[bool, float]:
    verdict = sylvester_positive_definite(forms.P) and sylvester_positive_definite(
        forms.S
    )
    lambda_min = min(min_eigenvalue(forms.P), min_eigenvalue(forms.S))
    if verdict != (lambda_min > 0):
        logger.warning(
            "Sylvester verdict %s disagrees with smallest eigenvalue %.3g",
            verdict,
            lambda_min,
        )
    return verdict, lambda_min


# Constants


def parabola_q(k: float, params: ModelParams) -> float:
    """
    Q(k) = k - a^2 k^2 / (2 r), the upper limit for eps1
    """
    return k - params.a**2 * k**2 / (2 * params.r)


def case1_coefficients(params: ModelParams, k: float, eps1: float) -> tuple[float, float]:
    """
    Coefficients of int u^2 and int (v - f)^2 in the extinction decay estimate
    """
    return params.r / 2 - 1 / (4 * eps1), parabola_q(k, params) - eps1


def case1_condition(
    params: ModelParams, k: float, eps1: float, tol: float = 1e-12
) -> bool:
    """
    Re-check 1/(2r) <= eps1 <= Q(k)
    """
    return 1 / (2 * params.r) - tol <= eps1 <= parabola_q(k, params) + tol


def select_constants_case1(params: ModelParams) -> LyapunovConstants:
    r, a = params.r, params.a
    if not params.f > r:
        raise HypothesisError(f"Extinction estimate needs f > r (f={params.f}, r={r})")
    if r < a:
        raise HypothesisError(f"Extinction estimate needs r >= a (r={r}, a={a})")

    if a == 0:
        k = 1 / r
        eps1 = 3 / (4 * r)
    else:
        # Vertex of Q, where the admissible eps1 interval is widest
        k = r / a**2
        lower, upper = 1 / (2 * r), parabola_q(k, params)
        if r == a or upper - lower <= 1e-15 * upper:
            eps1 = lower
        else:
            result = optimize.minimize_scalar(
                lambda eps: -min(case1_coefficients(params, k, eps)),
                bounds=(lower, upper),
                method="bounded",
                options={"xatol": 1e-12},
            )
            eps1 = min(max(float(result.x), lower), upper)

    if r == a:
        # The interval collapses to a point and both coefficients vanish
        c1 = 0.0
    else:
        c1 = max(0.0, min(case1_coefficients(params, k, eps1)))
    logger.info("Extinction constants: k=%g eps1=%g c1=%g", k, eps1, c1)
    return LyapunovConstants(case="extinction", k=k, c=c1, eps1=eps1)


def _form_margin(params: ModelParams, k: float) -> float:
    forms = build_forms(params, k)
    return min(min_eigenvalue(forms.P), min_eigenvalue(forms.S))


def select_constants_case2(params: ModelParams, feasible_k: Interval) -> LyapunovConstants:
    """
    Weight k maximising the smaller eigenvalue of the two forms over the interval
    """
    _coexistence(params)
    if feasible_k.empty:
        raise InfeasibleError(
            f"No admissible k for r={params.r}: interval"
            f" ({feasible_k.lower:.6g}, {feasible_k.upper:.6g}) is empty"
        )

    lower, upper = feasible_k.lower, feasible_k.upper
    if not math.isfinite(upper):
        # Margins saturate for large k, a finite window is enough
        upper = 10 * (1 + lower + 1 / params.r)

    ks = np.linspace(lower, upper, K_SCAN_POINTS + 2)[1:-1]
    margins = [_form_margin(params, k) for k in ks]
    best = int(np.argmax(margins))

    lo = ks[best - 1] if best > 0 else lower
    hi = ks[best + 1] if best < len(ks) - 1 else upper
    result = optimize.minimize_scalar(
        lambda k: -_form_margin(params, k),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12 * max(1.0, hi)},
    )
    k, c2 = float(ks[best]), float(margins[best])
    if -result.fun > c2:
        k, c2 = float(result.x), float(-result.fun)

    if c2 <= 0:
        raise InfeasibleError(f"No positive-definite pair found for r={params.r}")
    logger.info("Coexistence constants: k=%g c2=%g", k, c2)
    return LyapunovConstants(case="coexistence", k=k, c=c2)


# Decay monitoring


class DecaySample(Protocol):
    t: float
    E: float | None
    F: float | None


@dataclass
class DecayReport:
    case: str
    c: float
    intervals: int
    violations: int
    excluded: int
    worst_violation: float
    nonincreasing: bool
    max_increase: float
    dissipation_integral: float
    energy_drop: float
    dissipation_bound_holds: bool

    @property
    def violation_fraction(self) -> float:
        if self.intervals == 0:
            return 0.0
        return self.violations / self.intervals

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["violation_fraction"] = self.violation_fraction
        return data


def monitor_decay(
    samples: Iterable[DecaySample], which: str, constants: LyapunovConstants
) -> DecayReport:
    """
    Check dE/dt <= -c F between consecutive samples

    The rate is the difference quotient of E. F at the interval midpoint is taken
    as the geometric mean of the end values, which is exact for exponential decay.
    Each interval may exceed the bound by 1e-6 (1 + |E|) to absorb discretisation
    error. Samples where E is undefined are skipped and counted.
    """
    if which not in CASES:
        raise ValueError(f"Unknown case {which!r}")
    c = constants.c

    points: list[tuple[float, float, float]] = []
    excluded = 0
    for sample in samples:
        if sample.E is None or sample.F is None:
            excluded += 1
        else:
            points.append((sample.t, sample.E, sample.F))

    intervals = violations = 0
    worst = max_increase = dissipation = allowance = 0.0
    nonincreasing = True
    for (t0, E0, F0), (t1, E1, F1) in zip(points, points[1:]):
        dt = t1 - t0
        if dt <= 0:
            continue
        intervals += 1
        dE = E1 - E0
        F_mid = math.sqrt(max(F0, 0.0) * max(F1, 0.0))
        tol = 1e-6 * (1 + abs(E0))
        dissipation += F_mid * dt
        allowance += tol * dt

        excess = dE / dt + c * F_mid - tol
        if excess > 0:
            violations += 1
            worst = max(worst, excess)

        increase = dE / (1 + abs(E0))
        max_increase = max(max_increase, increase)
        if increase > 1e-10:
            nonincreasing = False

    energy_drop = points[0][1] - points[-1][1] if points else 0.0
    if excluded:
        logger.warning("%d samples with undefined functional excluded", excluded)

    return DecayReport(
        case=which,
        c=c,
        intervals=intervals,
        violations=violations,
        excluded=excluded,
        worst_violation=worst,
        nonincreasing=nonincreasing,
        max_increase=max_increase,
        dissipation_integral=dissipation,
        energy_drop=energy_drop,
        dissipation_bound_holds=c * dissipation <= energy_drop + allowance,
    )
