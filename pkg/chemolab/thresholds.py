"""
Algebraic thresholds for the Lyapunov constructions

For r > f the coexistence functional decays when some k > 0 makes both

    r k - (1 - k a)^2 / 4 > 0        (k in (k1(r), k2(r)))
    k > k_min(r) = chi^2 (r - f) / (4 D (r + a))

hold. The rates where k_min meets k1 or k2 are the positive roots of a cubic, and
the critical rate r_c is read off those roots. For r < f the extinction functional
only needs r >= a.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy import optimize

from .exceptions import NumericalError, RegimeError
from .model import ModelParams


logger = logging.getLogger(__name__)

#: Roots closer than this, relative to 1 + |r|, are one double root
DOUBLE_ROOT_TOL = 1e-9

#: Relative accuracy of refined roots
ROOT_RTOL = 1e-12


@dataclass(frozen=True)
class Interval:
    """
    Open interval (lower, upper); empty when lower >= upper
    """

    lower: float
    upper: float

    @property
    def empty(self) -> bool:
        return not self.lower < self.upper

    def __contains__(self, value: float) -> bool:
        return self.lower < value < self.upper

    def as_list(self) -> list[float | None]:
        # JSON has no infinity
        return [self.lower, self.upper if math.isfinite(self.upper) else None]


def k_min(r: float, params: ModelParams) -> float:
    """
    Lower bound on k from the gradient form

    Without self-production the bound reduces to chi^2 (r - f) / (4 D).
    """
    if r < params.f:
        raise RegimeError(f"k_min needs r >= f (r={r}, f={params.f})")
    if r == params.f:
        return 0.0
    if params.a == 0:
        return params.chi**2 * (r - params.f) / (4 * params.D)
    return params.chi**2 * (r - params.f) / (4 * params.D * (r + params.a))


def k_interval(r: float, a: float) -> Interval:
    """
    Roots (k1, k2) of r k - (1 - k a)^2 / 4 = 0; (0, inf) when a = 0
    """
    if a == 0:
        return Interval(0.0, math.inf)
    root = 2 * math.sqrt(r * r + a * r)
    k2 = (a + 2 * r + root) / a**2
    # k1 * k2 = 1 / a^2, which avoids cancellation in the minus branch
    k1 = 1 / (a**2 * k2)
    return Interval(k1, k2)


def cubic_coeffs(params: ModelParams) -> list[float]:
    """
    Coefficients [c3, c2, c1, c0] of the cubic whose roots are the rates where
    k_min meets k1 or k2
    """
    D, chi, a, f = params.D, params.chi, params.a, params.f
    if a == 0:
        raise RegimeError("The threshold cubic vanishes identically when a = 0")
    c3 = 16 * D * a**2 * chi**2
    c2 = 24 * D * a**3 * chi**2 - a**4 * chi**4 - 16 * f * D * a**2 * chi**2 - 16 * D**2 * a**2
    c1 = (
        2 * f * a**4 * chi**4
        + 8 * D * a**4 * chi**2
        - 24 * f * D * a**3 * chi**2
        - 32 * D**2 * a**3
    )
    c0 = -(16 * D**2 * a**4 + 8 * D * a**4 * chi**2 * f + a**4 * chi**4 * f**2)
    return [c3, c2, c1, c0]


def cubic_real_roots(coeffs: list[float]) -> list[float]:
    """
    Real roots of a cubic, ascending, with a double root listed twice

    The monic cubic is split into monotone pieces at its critical points inside the
    Cauchy bound; each piece with a sign change is refined by bisection. A critical
    point where the cubic vanishes to rounding is a double root.
    """
    c3 = coeffs[0]
    if c3 == 0:
        raise NumericalError("Leading coefficient is zero", diagnostics={"coeffs": coeffs})
    monic = [c / c3 for c in coeffs]
    _, b2, b1, b0 = monic

    def p(x: float) -> float:
        return ((x + b2) * x + b1) * x + b0

    def scale(x: float) -> float:
        return abs(x) ** 3 + abs(b2) * x * x + abs(b1) * abs(x) + abs(b0)

    bound = 1 + max(abs(b2), abs(b1), abs(b0))

    # Critical points solve 3x^2 + 2 b2 x + b1 = 0
    critical: list[float] = []
    disc = b2 * b2 - 3 * b1
    if disc > 0:
        q = -(b2 + math.copysign(math.sqrt(disc), b2))
        critical = [x for x in sorted([q / 3, b1 / q]) if -bound < x < bound]

    double = [x for x in critical if abs(p(x)) <= 1e-12 * scale(x)]
    breaks = [-bound, *critical, bound]
    values = [0.0 if x in double else p(x) for x in breaks]

    roots: list[float] = []
    for (lo, hi), (p_lo, p_hi) in zip(
        zip(breaks, breaks[1:]), zip(values, values[1:])
    ):
        if p_lo * p_hi >= 0:
            continue
        try:
            root = optimize.bisect(p, lo, hi, xtol=1e-300, rtol=ROOT_RTOL, maxiter=500)
        except (RuntimeError, ValueError) as e:
            raise NumericalError(
                "Bisection failed to converge",
                diagnostics={"coeffs": coeffs, "bracket": (lo, hi), "error": str(e)},
            ) from e
        roots.append(float(root))

    for x in double:
        roots.extend([x, x])
    roots.sort()

    # Distinct roots that are too close to tell apart count as a double root
    for i in range(len(roots) - 1):
        if abs(roots[i + 1] - roots[i]) < DOUBLE_ROOT_TOL * (1 + abs(roots[i])):
            mean = 0.5 * (roots[i] + roots[i + 1])
            roots[i] = roots[i + 1] = mean
    return roots


def positive_roots(params: ModelParams) -> list[float]:
    if params.a == 0 or params.chi == 0:
        return []
    return [x for x in cubic_real_roots(cubic_coeffs(params)) if x > 0]


def r_critical(params: ModelParams) -> float:
    """
    Critical logistic rate above which the coexistence functional decays

    r_c is the only positive root of the cubic, or the largest when there are three.
    Without self-production or without taxis every r > f works and r_c = 0.
    """
    if params.a == 0 or params.chi == 0:
        return 0.0
    roots = positive_roots(params)
    if len(roots) == 1:
        return roots[0]
    if len(roots) == 3:
        return roots[2]
    raise NumericalError(
        f"Expected 1 or 3 positive roots, found {len(roots)}",
        diagnostics={"coeffs": cubic_coeffs(params), "roots": roots},
    )


def feasible_k(r: float, params: ModelParams) -> Interval:
    """
    Weights k satisfying both threshold inequalities at rate r

    For a > 0 these make both quadratic forms positive definite. For a = 0 the
    bound on k is the reduced chi^2 (r - f) / (4 D), which for r < 1 lies below what
    the gradient form needs; ``threshold_report`` notes that case.
    """
    if r <= params.f:
        raise RegimeError(f"Feasible k needs r > f (r={r}, f={params.f})")
    bound = k_min(r, params)
    if params.a == 0:
        return Interval(bound, math.inf)
    interval = k_interval(r, params.a)
    return Interval(max(bound, interval.lower), interval.upper)


def raw_feasible(r: float, k: npt.ArrayLike, params: ModelParams) -> Any:
    """
    Both inequalities checked directly; ``k`` may be an array of weights
    """
    ks = np.asarray(k, dtype=np.float64)
    ok = (r * ks - (1 - ks * params.a) ** 2 / 4 > 0) & (ks > k_min(r, params))
    return bool(ok) if ok.ndim == 0 else ok


def scan_feasible(r: float, params: ModelParams, points: int = 10_000) -> bool:
    """
    Brute-force search for a k satisfying both raw inequalities
    """
    upper = k_interval(r, params.a).upper
    if not math.isfinite(upper):
        upper = 10 * (1 + k_min(r, params) + 1 / r)
    ks = np.linspace(0, upper + 1, points + 1)[1:]
    return bool(raw_feasible(r, ks, params).any())


def case1_feasible(r: float, a: float) -> bool:
    """
    The extinction functional can be made to decay iff r >= a
    """
    if a == 0:
        return True
    return r >= a


@dataclass
class ThresholdReport:
    params: ModelParams
    k_min: float | None
    k1: float | None
    k2: float | None
    cubic: list[float] | None
    cubic_degenerate: bool
    positive_roots: list[float]
    r_c: float
    feasible_interval: Interval | None
    case1_feasible: bool
    certified_feasible: bool
    brute_force_feasible: bool | None
    taxis_free: bool
    self_production: bool
    pattern_window: tuple[float, float] | None = None
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        return {
            "params": self.params.as_dict(),
            "k_min": self.k_min,
            "k1": self.k1,
            "k2": self.k2,
            "cubic": self.cubic,
            "cubic_degenerate": self.cubic_degenerate,
            "positive_roots": self.positive_roots,
            "r_c": self.r_c,
            "feasible_interval": (
                self.feasible_interval.as_list() if self.feasible_interval else None
            ),
            "feasible_interval_empty": (
                self.feasible_interval.empty if self.feasible_interval else None
            ),
            "case1_feasible": self.case1_feasible,
            "certified_feasible": self.certified_feasible,
            "brute_force_feasible": self.brute_force_feasible,
            "taxis_free": self.taxis_free,
            "self_production": self.self_production,
            "pattern_window": list(self.pattern_window) if self.pattern_window else None,
            "notes": self.notes,
        }


def threshold_report(params: ModelParams) -> ThresholdReport:
    """
    Every threshold quantity at the parameters' own rate r
    """
    r, a = params.r, params.a
    notes = []

    cubic: list[float] | None = None
    degenerate = False
    if a == 0:
        notes.append("a = 0: the cubic vanishes identically and r_c = 0")
    else:
        cubic = cubic_coeffs(params)
        if params.chi == 0:
            degenerate = True
            notes.append("chi = 0: taxis-free, leading coefficient vanishes and r_c = 0")

    roots = positive_roots(params)
    r_c = r_critical(params)

    k1 = k2 = None
    if a > 0:
        interval = k_interval(r, a)
        k1, k2 = interval.lower, interval.upper

    if a == 0 and params.chi > 0 and params.f < r < 1:
        # The gradient form itself needs k > chi^2 u* / (4 D) with u* = (r - f) / r
        needed = params.chi**2 * (r - params.f) / (4 * params.D * r)
        notes.append(
            f"a = 0 with r < 1: the reduced k_min {k_min(r, params):.6g} is below the"
            f" gradient-form bound {needed:.6g}; constants use the exact eigenvalues"
        )

    kmin = k_min(r, params) if r >= params.f else None
    feasible = feasible_k(r, params) if r > params.f else None
    brute = scan_feasible(r, params) if r > params.f else None
    window = (roots[1], roots[2]) if len(roots) == 3 else None

    report = ThresholdReport(
        params=params,
        k_min=kmin,
        k1=k1,
        k2=k2,
        cubic=cubic,
        cubic_degenerate=degenerate,
        positive_roots=roots,
        r_c=r_c,
        feasible_interval=feasible,
        case1_feasible=case1_feasible(r, a),
        certified_feasible=r > params.f and r > r_c,
        brute_force_feasible=brute,
        taxis_free=params.chi == 0,
        self_production=a > 0,
        pattern_window=window,
        notes=notes,
    )
    logger.info("Thresholds for %s: r_c=%g, roots=%s", params, r_c, roots)
    return report
