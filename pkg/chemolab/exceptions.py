from __future__ import annotations

from typing import Any


class ChemolabException(Exception):
    pass


class ConfigurationError(ChemolabException):
    """
    A problem in the parameters, grid or run configuration
    """

    pass


class InvalidFieldError(ChemolabException):
    """
    A field or state holds values outside its domain
    """

    pass


class ShapeError(InvalidFieldError):
    """
    Fields which must share a grid do not
    """

    pass


class SimulationError(ChemolabException):
    """
    A problem while advancing the system in time
    """

    def __init__(self, *args, t: float | None = None, trajectory: Any = None):
        super().__init__(*args)
        self.t = t
        self.trajectory = trajectory

    def __str__(self):
        msg = str(self.args[0]) if self.args else self.__class__.__name__
        if self.t is not None:
            msg += f" (t={self.t:.6g})"
        return msg


class BlowUpError(SimulationError):
    """
    The solution became non-finite or exceeded the blow-up guard
    """

    pass


class NegativityError(SimulationError):
    """
    The density went negative beyond the clamping tolerance
    """

    pass


class RegimeError(ChemolabException):
    """
    The parameters are in the wrong regime for the requested quantity
    """

    pass


class HypothesisError(RegimeError):
    """
    The hypotheses of a stability estimate are not met
    """

    pass


class InfeasibleError(ChemolabException):
    """
    No admissible weight exists for the requested construction
    """

    pass


class UndefinedFunctionalError(ChemolabException):
    """
    A functional cannot be evaluated on the given state
    """

    pass


class NumericalError(ChemolabException):
    """
    A numerical routine failed to converge
    """

    def __init__(self, *args, diagnostics: dict[str, Any] | None = None):
        super().__init__(*args)
        self.diagnostics = diagnostics or {}

    def __str__(self):
        msg = str(self.args[0]) if self.args else self.__class__.__name__
        if self.diagnostics:
            details = ", ".join(f"{key}={val}" for key, val in self.diagnostics.items())
            msg += f"\n  {details}"
        return msg
