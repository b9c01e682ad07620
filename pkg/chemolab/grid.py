"""
Cell-centred rectangular grids with zero-flux boundaries
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
import numpy.typing as npt

from .exceptions import ConfigurationError, InvalidFieldError, ShapeError


Array = npt.NDArray[np.float64]
Index = tuple[slice, ...]


def _sides(ndim: int, axis: int, lead: int = 0) -> tuple[Index, Index]:
    """
    Index tuples selecting the cells below and above each interior face along ``axis``

    ``lead`` leading axes are left whole, for stacked fields.
    """
    lower = [slice(None)] * (lead + ndim)
    upper = [slice(None)] * (lead + ndim)
    lower[lead + axis] = slice(None, -1)
    upper[lead + axis] = slice(1, None)
    return tuple(lower), tuple(upper)


@dataclass(frozen=True)
class Grid:
    """
    Cell-centred mesh on (0, length_x) or (0, length_x) x (0, length_y)

    Values live at cell centres. Boundary faces carry zero flux, which is the same as
    a ghost cell mirroring the adjacent interior cell.
    """

    n_x: int
    length_x: float = 1.0
    n_y: int = 1
    length_y: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"Grid dimension must be 1 or 2, not {self.dim}")
        if self.n_x < 3:
            raise ConfigurationError(f"Grid needs at least 3 cells in x, not {self.n_x}")
        if self.dim == 2 and self.n_y < 3:
            raise ConfigurationError(f"Grid needs at least 3 cells in y, not {self.n_y}")
        if self.dim == 1 and self.n_y != 1:
            raise ConfigurationError("A 1D grid must have n_y = 1")
        if not (self.length_x > 0 and self.length_y > 0):
            raise ConfigurationError("Grid side lengths must be positive")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Grid:
        known = {"dim", "n_x", "n_y", "length_x", "length_y"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"Unexpected grid values {', '.join(sorted(unknown))}")
        return cls(**data)

    def as_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"dim": self.dim, "n_x": self.n_x, "length_x": self.length_x}
        if self.dim == 2:
            data.update({"n_y": self.n_y, "length_y": self.length_y})
        return data

    @property
    def h_x(self) -> float:
        return self.length_x / self.n_x

    @property
    def h_y(self) -> float:
        return self.length_y / self.n_y

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        if self.dim == 1:
            return (self.h_x,)
        return (self.h_x, self.h_y)

    @cached_property
    def faces(self) -> tuple[tuple[Index, Index, float], ...]:
        """
        Per axis: the cells on either side of the interior faces, and the spacing
        """
        return tuple(
            (*_sides(self.dim, axis), h) for axis, h in enumerate(self.spacing)
        )

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    @property
    def shape(self) -> tuple[int, ...]:
        if self.dim == 1:
            return (self.n_x,)
        return (self.n_x, self.n_y)

    @property
    def n_cells(self) -> int:
        return self.n_x * self.n_y

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return self.cell_volume * self.n_cells

    def centers(self) -> tuple[Array, ...]:
        """
        Cell centre coordinates, one array per dimension, each shaped like a field
        """
        x = (np.arange(self.n_x) + 0.5) * self.h_x
        if self.dim == 1:
            return (x,)
        y = (np.arange(self.n_y) + 0.5) * self.h_y
        xx, yy = np.meshgrid(x, y, indexing="ij")
        return (xx, yy)

    def check(self, values: npt.ArrayLike) -> Array:
        """
        Return values as a float array shaped for this grid, or raise

        A flat array with one entry per cell is reshaped.
        """
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != self.shape:
            if arr.size != self.n_cells:
                raise ShapeError(
                    f"Field has {arr.size} values, grid has {self.n_cells} cells"
                )
            arr = arr.reshape(self.shape)
        if not np.all(np.isfinite(arr)):
            raise InvalidFieldError("Field contains non-finite values")
        return arr

    # Operators on raw arrays. These skip validation and are used by the time stepper

    def divergence(self, fluxes: list[Array]) -> Array:
        """
        Discrete divergence of interior face fluxes, one array per axis

        Boundary faces carry no flux, so each interior face moves mass between its
        two cells only.
        """
        out = np.zeros(self.shape)
        for flux, (lower, upper, h) in zip(fluxes, self.faces):
            out[lower] += flux / h
            out[upper] -= flux / h
        return out

    def laplacian(self, values: Array) -> Array:
        return self.divergence(
            [(values[upper] - values[lower]) / h for lower, upper, h in self.faces]
        )

    def taxis(self, u: Array, v: Array, chi: float) -> Array:
        """
        Divergence of chi * u * grad(v), with u averaged onto faces
        """
        return self.divergence(
            [
                0.5 * chi * (u[lower] + u[upper]) * (v[upper] - v[lower]) / h
                for lower, upper, h in self.faces
            ]
        )

    def grad_sq(self, values: Array) -> Array:
        out = np.zeros(self.shape)
        for lower, upper, h in self.faces:
            # Edge cells mirror their neighbour, so only one difference reaches them
            central = np.zeros(self.shape)
            step = values[upper] - values[lower]
            central[upper] += step
            central[lower] += step
            out += (central / (2 * h)) ** 2
        return out

    def integrate(self, values: Array) -> float:
        return self.cell_volume * float(np.sum(values))


class Stencil:
    """
    Transport terms for a stacked pair ``[u, v]`` on one grid

    Face buffers are allocated once, so repeated evaluation inside a time stepper
    creates no temporaries. Results are accumulated into the caller's array.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.shape = (2, *grid.shape)
        self._axes: list[tuple[Any, ...]] = []
        for axis, h in enumerate(grid.spacing):
            face_shape = list(grid.shape)
            face_shape[axis] -= 1
            jump = np.empty((2, *face_shape))
            self._axes.append(
                (
                    *_sides(grid.dim, axis, lead=1),
                    *_sides(grid.dim, axis),
                    1 / h**2,
                    jump,
                    jump[0],
                    jump[1],
                    np.empty(face_shape),
                )
            )

    def add_transport(self, pair: Array, D: float, chi: float, out: Array) -> Array:
        """
        Add ``D lap(u) + chi div(u grad v)`` to ``out[0]`` and ``lap(v)`` to ``out[1]``
        """
        u = pair[0]
        for (
            lower,
            upper,
            cell_lower,
            cell_upper,
            inv_h2,
            jump,
            jump_u,
            jump_v,
            u_face,
        ) in self._axes:
            np.subtract(pair[upper], pair[lower], out=jump)
            np.add(u[cell_lower], u[cell_upper], out=u_face)
            np.multiply(u_face, jump_v, out=u_face)
            np.multiply(u_face, 0.5 * chi * inv_h2, out=u_face)
            np.multiply(jump_u, D * inv_h2, out=jump_u)
            np.multiply(jump_v, inv_h2, out=jump_v)
            np.add(jump_u, u_face, out=jump_u)
            side = out[lower]
            np.add(side, jump, out=side)
            side = out[upper]
            np.subtract(side, jump, out=side)
        return out


@dataclass(frozen=True, eq=False)
class Field:
    """
    Scalar values on the cells of a grid
    """

    values: Array
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "values", self.grid.check(self.values))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> Field:
        return cls(np.full(grid.shape, float(value)), grid)

    def with_values(self, values: npt.ArrayLike) -> Field:
        return Field(np.asarray(values, dtype=np.float64), self.grid)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


def _same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise ShapeError(f"Fields are on different grids: {grid} and {other.grid}")
    return grid


def laplacian_neumann(f: Field) -> Field:
    """
    Second-order Laplacian with zero normal flux on every boundary face
    """
    return Field(f.grid.laplacian(f.values), f.grid)


def chemotaxis_divergence(u: Field, v: Field, chi: float) -> Field:
    """
    Conservative form of chi * div(u grad v)
    """
    grid = _same_grid(u, v)
    return Field(grid.taxis(u.values, v.values, chi), grid)


def integrate(f: Field) -> float:
    """
    Midpoint quadrature over the domain
    """
    return f.grid.integrate(f.values)


def gradient_magnitude_sq(f: Field) -> Field:
    return Field(f.grid.grad_sq(f.values), f.grid)
