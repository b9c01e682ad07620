"""
Spatially homogeneous steady states and their local stability
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import ModelParams


class SteadyKind(str, Enum):
    TRIVIAL = "trivial"
    COEXISTENCE = "coexistence"


class Regime(str, Enum):
    EXTINCTION = "extinction"
    COEXISTENCE = "coexistence"
    DEGENERATE = "degenerate"


class Stability(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    NOT_CLASSIFIED = "not-classified"


@dataclass(frozen=True)
class SteadyState:
    u_val: float
    v_val: float
    kind: SteadyKind

    #: Both components non-negative
    admissible: bool = True

    def __str__(self) -> str:
        return "(0,f)" if self.kind == SteadyKind.TRIVIAL else "(u*,v*)"


@dataclass(frozen=True)
class RegimeReport:
    regime: Regime
    trivial: Stability
    coexistence: Stability


def coexistence_values(params: ModelParams) -> tuple[float, float]:
    """
    (u*, v*) = ((r - f) / (r + a), r (f + a) / (r + a)), whatever its sign
    """
    r, a, f = params.r, params.a, params.f
    return (r - f) / (r + a), r * (f + a) / (r + a)


def homogeneous_steady_states(params: ModelParams) -> list[SteadyState]:
    u_star, v_star = coexistence_values(params)
    return [
        SteadyState(0.0, params.f, SteadyKind.TRIVIAL),
        SteadyState(
            u_star, v_star, SteadyKind.COEXISTENCE, admissible=params.r >= params.f
        ),
    ]


def classify_local_stability(params: ModelParams) -> RegimeReport:
    if params.r < params.f:
        return RegimeReport(Regime.EXTINCTION, Stability.STABLE, Stability.NOT_CLASSIFIED)
    if params.r > params.f:
        return RegimeReport(Regime.COEXISTENCE, Stability.UNSTABLE, Stability.STABLE)
    return RegimeReport(
        Regime.DEGENERATE, Stability.NOT_CLASSIFIED, Stability.NOT_CLASSIFIED
    )


def target_state(params: ModelParams) -> SteadyState:
    """
    The steady state solutions are expected to approach in this regime
    """
    trivial, coexistence = homogeneous_steady_states(params)
    if classify_local_stability(params).regime == Regime.COEXISTENCE:
        return coexistence
    return trivial


def homogeneous_jacobian(params: ModelParams, steady: SteadyState) -> np.ndarray:
    """
    Linearisation of the reaction terms at a homogeneous state (zero spatial mode)
    """
    u, v = steady.u_val, steady.v_val
    return np.array(
        [
            [params.r * (1 - 2 * u) - v, -u],
            [params.a, -1.0],
        ]
    )
