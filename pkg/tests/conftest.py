from __future__ import annotations

import numpy as np
import pytest

from ifl import (
    BoxGeometry,
    Field,
    WalkKernel,
    gaussian_disorder,
    nearest_neighbor_kernel,
    quadratic_potential,
)


@pytest.fixture(scope="session")
def nn_kernel() -> WalkKernel:
    return nearest_neighbor_kernel()


@pytest.fixture(scope="session")
def quad_pot():
    return quadratic_potential()


def make_disorder(geometry: BoxGeometry, sigma: float, seed: int) -> Field:
    return gaussian_disorder(geometry, sigma, np.random.default_rng(seed))


def random_field(geometry: BoxGeometry, seed: int, scale: float = 1.0) -> Field:
    rng = np.random.default_rng(seed)
    return Field(geometry, scale * rng.standard_normal(geometry.n_sites))


def random_profile(geometry: BoxGeometry, seed: int, scale: float = 1.0) -> Field:
    """Random interior profile vanishing on the collar."""
    rng = np.random.default_rng(seed)
    return Field.from_interior(geometry, scale * rng.standard_normal(geometry.n_interior))


def rotate90(field: Field) -> Field:
    """Field rotated by 90 degrees: value at (x, y) moves to (-y, x)."""
    geom = field.geometry
    side = geom.side
    grid = field.values.reshape(side, side)
    return Field(geom, np.rot90(grid, k=1).copy().ravel())


def rotate_kernel(kernel: WalkKernel) -> WalkKernel:
    from ifl import validate_kernel

    table = {(-dy, dx): w for (dx, dy), w in zip(kernel.offsets, kernel.weights)}
    return validate_kernel(table, kernel.range)
