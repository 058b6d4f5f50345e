"""Shared solved instances; session-scoped because solves dominate runtime."""

import numpy as np
import pytest

from maxsurf import Grid2D, QuarticDifferential
from maxsurf.solver import FieldState, barbot_state, solve


@pytest.fixture(scope="session")
def q_one():
    return QuarticDifferential([1.0])


@pytest.fixture(scope="session")
def barbot_instance(q_one):
    """Criterion-1 configuration: Barbot Dirichlet data on [0,10]^2, h=0.1."""
    grid = Grid2D(0, 10, 0, 10, 101, 101)
    bnd = barbot_state(q_one, grid)
    state, info = solve(q_one, grid, bnd, bnd.copy(), tol=1e-12)
    return grid, state, info


def perturbed_boundary(grid, amplitude=0.2, profile="const"):
    """Balanced Dirichlet data: mu2 prescribed, lambda set so K = 0 on the wall."""
    mu2 = np.zeros(grid.shape)
    if profile == "const":
        px = np.full(grid.nx, amplitude)
        py = np.full(grid.ny, amplitude)
    else:
        L = grid.x1 - grid.x0
        px = amplitude * np.sin(np.pi * (grid.xs - grid.x0) / L) ** 2
        py = amplitude * np.sin(np.pi * (grid.ys - grid.y0) / L) ** 2
    mu2[0, :] = px
    mu2[-1, :] = px
    mu2[:, 0] = py
    mu2[:, -1] = py
    lam = 0.25 * np.log(8.0) + 0.25 * np.log(np.cosh(mu2))
    return FieldState(lam, mu2)


def solve_perturbed(q, grid, amplitude=0.2, profile="const", tol=1e-11):
    bnd = perturbed_boundary(grid, amplitude, profile)
    state, info = solve(q, grid, bnd, bnd.copy(), tol=tol)
    return state, info


@pytest.fixture(scope="session")
def perturbed_small(q_one):
    """Smooth-walled perturbed instance on [0,4]^2, h = 0.05."""
    grid = Grid2D(0, 4, 0, 4, 81, 81)
    state, _ = solve_perturbed(q_one, grid, profile="sin2")
    return grid, state


@pytest.fixture()
def rng():
    # fresh generator per test: deterministic and independent of test order
    return np.random.default_rng(20250810)
