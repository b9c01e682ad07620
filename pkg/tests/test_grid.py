import math

import numpy as np
import pytest

from chemolab.exceptions import ConfigurationError, InvalidFieldError, ShapeError
from chemolab.grid import (
    Field,
    Grid,
    Stencil,
    chemotaxis_divergence,
    gradient_magnitude_sq,
    integrate,
    laplacian_neumann,
)


@pytest.fixture
def unit_grid():
    """
    Three cells of width 1
    """
    return Grid(n_x=3, length_x=3.0)


@pytest.mark.parametrize(
    "kwargs",
    (
        {"n_x": 2},
        {"n_x": 8, "dim": 3},
        {"n_x": 8, "n_y": 2, "dim": 2},
        {"n_x": 8, "n_y": 4},
        {"n_x": 8, "length_x": 0.0},
        {"n_x": 8, "n_y": 8, "length_y": -1.0, "dim": 2},
    ),
)
def test_grid__invalid__raises(kwargs):
    with pytest.raises(ConfigurationError):
        Grid(**kwargs)


def test_grid_from_dict__unknown_key__raises():
    with pytest.raises(ConfigurationError, match="Unexpected grid values"):
        Grid.from_dict({"n_x": 8, "n_z": 2})


def test_grid__2d__geometry(grid_2d):
    assert grid_2d.shape == (12, 10)
    assert grid_2d.n_cells == 120
    assert grid_2d.spacing == pytest.approx((2.0 / 12, 1.5 / 10))
    assert grid_2d.h_min == pytest.approx(0.15)
    assert grid_2d.volume == pytest.approx(3.0)
    xx, yy = grid_2d.centers()
    assert xx.shape == grid_2d.shape
    assert xx[0, 0] == pytest.approx(1 / 12)
    assert yy[0, -1] == pytest.approx(1.5 - 0.075)


def test_grid_as_dict__round_trips(grid_2d):
    assert Grid.from_dict(grid_2d.as_dict()) == grid_2d


def test_field__flat_values__reshaped(grid_2d):
    field = Field(np.arange(120.0), grid_2d)
    assert field.values.shape == (12, 10)


def test_field__wrong_size__shape_error(grid_1d):
    with pytest.raises(ShapeError):
        Field(np.zeros(grid_1d.n_cells + 1), grid_1d)


@pytest.mark.parametrize("bad", (np.nan, np.inf, -np.inf))
def test_field__non_finite__invalid(grid_1d, bad):
    values = np.ones(grid_1d.shape)
    values[3] = bad
    with pytest.raises(InvalidFieldError):
        Field(values, grid_1d)


def test_laplacian__constant__zero(grid_2d):
    result = laplacian_neumann(Field.constant(grid_2d, 4.2))
    assert np.all(result.values == 0)


def test_laplacian__hand_stencil__mirrored_ghosts(unit_grid):
    result = laplacian_neumann(Field(np.array([1.0, 2.0, 1.0]), unit_grid))
    np.testing.assert_allclose(result.values, [1.0, -2.0, 1.0])
    assert integrate(result) == 0


@pytest.mark.parametrize("fixture", ("grid_1d", "grid_2d"))
def test_laplacian__random_fields__integral_vanishes(fixture, rng, request):
    grid = request.getfixturevalue(fixture)
    for _ in range(100):
        field = Field(rng.normal(size=grid.shape), grid)
        total = integrate(laplacian_neumann(field))
        scale = integrate(Field(np.abs(field.values), grid)) + 1
        assert abs(total) <= 1e-12 * scale


@pytest.mark.parametrize("fixture", ("grid_1d", "grid_2d"))
def test_chemotaxis__random_fields__integral_vanishes(fixture, rng, request):
    grid = request.getfixturevalue(fixture)
    for _ in range(100):
        u = Field(rng.uniform(0, 2, size=grid.shape), grid)
        v = Field(rng.normal(size=grid.shape), grid)
        total = integrate(chemotaxis_divergence(u, v, chi=3.0))
        scale = integrate(Field(np.abs(u.values * v.values), grid)) + 1
        assert abs(total) <= 1e-12 * scale


def test_chemotaxis__hand_stencil(unit_grid):
    u = Field(np.array([1.0, 2.0, 1.0]), unit_grid)
    v = Field(np.array([0.0, 1.0, 0.0]), unit_grid)
    result = chemotaxis_divergence(u, v, chi=1.0)
    np.testing.assert_allclose(result.values, [1.5, -3.0, 1.5])


def test_chemotaxis__constant_v__zero(grid_2d, rng):
    u = Field(rng.uniform(size=grid_2d.shape), grid_2d)
    result = chemotaxis_divergence(u, Field.constant(grid_2d, 2.0), chi=5.0)
    assert np.all(result.values == 0)


def test_chemotaxis__constant_u__scaled_laplacian(grid_2d, rng):
    v = Field(rng.normal(size=grid_2d.shape), grid_2d)
    result = chemotaxis_divergence(Field.constant(grid_2d, 0.7), v, chi=2.0)
    expected = 2.0 * 0.7 * laplacian_neumann(v).values
    np.testing.assert_allclose(result.values, expected, rtol=1e-13, atol=1e-12)


def test_chemotaxis__mismatched_grids__shape_error(grid_1d):
    other = Grid(n_x=grid_1d.n_x, length_x=2.0)
    with pytest.raises(ShapeError):
        chemotaxis_divergence(
            Field.constant(grid_1d, 1.0), Field.constant(other, 1.0), chi=1.0
        )


def test_operators__mirrored_input__mirrored_output(grid_1d, rng):
    u = rng.uniform(size=grid_1d.shape)
    v = rng.normal(size=grid_1d.shape)
    lap = laplacian_neumann(Field(v, grid_1d)).values
    lap_flip = laplacian_neumann(Field(v[::-1], grid_1d)).values
    np.testing.assert_allclose(lap_flip, lap[::-1], atol=1e-12)

    taxis = chemotaxis_divergence(Field(u, grid_1d), Field(v, grid_1d), 1.0).values
    taxis_flip = chemotaxis_divergence(
        Field(u[::-1], grid_1d), Field(v[::-1], grid_1d), 1.0
    ).values
    np.testing.assert_allclose(taxis_flip, taxis[::-1], atol=1e-12)


def _laplacian_error(n: int, length: float) -> float:
    grid = Grid(n_x=n, length_x=length)
    (x,) = grid.centers()
    wave = math.pi / length
    values = np.cos(wave * x)
    result = laplacian_neumann(Field(values, grid)).values
    return float(np.abs(result + wave**2 * values).max())


@pytest.mark.parametrize("length", (1.0, 2.5))
def test_laplacian__cosine__second_order(length):
    errors = [_laplacian_error(n, length) for n in (32, 64, 128, 256)]
    orders = [math.log2(coarse / fine) for coarse, fine in zip(errors, errors[1:])]
    for order in orders:
        assert 1.8 <= order <= 2.2


def test_laplacian__2d_cosine__second_order():
    def error(n: int) -> float:
        grid = Grid(n_x=n, n_y=n, length_x=1.0, length_y=2.0, dim=2)
        xx, yy = grid.centers()
        values = np.cos(math.pi * xx) * np.cos(math.pi * yy / 2)
        exact = -(math.pi**2 + (math.pi / 2) ** 2) * values
        return float(np.abs(laplacian_neumann(Field(values, grid)).values - exact).max())

    order = math.log2(error(32) / error(64))
    assert 1.8 <= order <= 2.2


@pytest.mark.parametrize("n_x", (3, 7, 64))
def test_integrate__constant_one__exact(n_x):
    assert integrate(Field.constant(Grid(n_x=n_x), 1.0)) == pytest.approx(1.0, abs=1e-15)


def test_integrate__constant_on_square__volume_times_value():
    grid = Grid(n_x=16, n_y=16, length_x=2.0, length_y=2.0, dim=2)
    assert integrate(Field.constant(grid, 3.0)) == pytest.approx(12.0, rel=1e-14)


@pytest.mark.parametrize("n_x", (3, 10, 33))
def test_integrate__linear__midpoint_exact(n_x):
    grid = Grid(n_x=n_x)
    (x,) = grid.centers()
    assert integrate(Field(x, grid)) == pytest.approx(0.5, abs=1e-14)


def test_gradient__constant__zero(grid_2d):
    result = gradient_magnitude_sq(Field.constant(grid_2d, -1.5))
    assert np.all(result.values == 0)


def test_gradient__hand_stencil__mirrored_boundary(unit_grid):
    result = gradient_magnitude_sq(Field(np.array([0.0, 1.0, 2.0]), unit_grid))
    np.testing.assert_allclose(result.values, [0.25, 1.0, 0.25])


def test_gradient__symmetric_field__symmetric_output(grid_1d):
    (x,) = grid_1d.centers()
    result = gradient_magnitude_sq(Field((x - 0.5) ** 2, grid_1d)).values
    np.testing.assert_allclose(result, result[::-1], atol=1e-14)


@pytest.mark.parametrize("fixture", ("grid_1d", "grid_2d"))
def test_stencil__transport__matches_operators(fixture, rng, request):
    grid = request.getfixturevalue(fixture)
    u = rng.uniform(0, 2, size=grid.shape)
    v = rng.uniform(0, 2, size=grid.shape)
    out = np.zeros((2, *grid.shape))
    Stencil(grid).add_transport(np.stack([u, v]), 0.7, 2.5, out)
    np.testing.assert_allclose(
        out[0], 0.7 * grid.laplacian(u) + grid.taxis(u, v, 2.5), rtol=1e-12, atol=1e-9
    )
    np.testing.assert_allclose(out[1], grid.laplacian(v), rtol=1e-12, atol=1e-9)


def test_stencil__repeated_calls__accumulate(grid_2d, rng):
    pair = rng.uniform(0, 1, size=(2, *grid_2d.shape))
    stencil = Stencil(grid_2d)
    once = stencil.add_transport(pair, 1.0, 1.0, np.zeros_like(pair))
    twice = np.ones_like(pair)
    stencil.add_transport(pair, 1.0, 1.0, twice)
    stencil.add_transport(pair, 1.0, 1.0, twice)
    np.testing.assert_allclose(twice, 1 + 2 * once, rtol=1e-12, atol=1e-9)


def test_stencil__constant_pair__leaves_output(grid_1d):
    pair = np.stack([np.full(grid_1d.shape, 0.3), np.full(grid_1d.shape, 2.0)])
    out = np.full((2, *grid_1d.shape), 5.0)
    Stencil(grid_1d).add_transport(pair, 1.0, 3.0, out)
    assert np.all(out == 5.0)
