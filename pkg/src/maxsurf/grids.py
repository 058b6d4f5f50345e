"""Uniform square-cell grids over a rectangle, Dirichlet or periodic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Grid2D:
    """Rectangle [x0,x1] x [y0,y1] with nx x ny nodes and square cells.

    Arrays over the grid are shaped (ny, nx), entry [j, i] at
    (x0 + i h, y0 + j h).  ``bc`` is 'dirichlet' or 'periodic'; for the
    periodic case the rectangle is a fundamental domain and the last
    row/column wrap onto the first (spacing (x1-x0)/nx).
    """

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid too coarse: nx={self.nx}, ny={self.ny} (need >= 8)")
        if self.bc not in ("dirichlet", "periodic"):
            raise ValueError(f"unknown bc {self.bc!r}")
        hx = (self.x1 - self.x0) / self._ncells(self.nx)
        hy = (self.y1 - self.y0) / self._ncells(self.ny)
        if abs(hx - hy) > 1e-12 * max(abs(hx), abs(hy)):
            raise ValueError(f"cells not square: hx={hx!r}, hy={hy!r}")

    def _ncells(self, n):
        return n if self.bc == "periodic" else n - 1

    @property
    def h(self):
        return (self.x1 - self.x0) / self._ncells(self.nx)

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def xs(self):
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def ys(self):
        return self.y0 + self.h * np.arange(self.ny)

    def meshgrid(self):
        return np.meshgrid(self.xs, self.ys, indexing="xy")

    def zgrid(self):
        X, Y = self.meshgrid()
        return X + 1j * Y

    def interior_mask(self):
        m = np.ones(self.shape, dtype=bool)
        if self.bc == "dirichlet":
            m[0, :] = m[-1, :] = False
            m[:, 0] = m[:, -1] = False
        return m

    def boundary_mask(self):
        return ~self.interior_mask()


def flat_laplacian(grid, f):
    """5-point Laplacian of a node array; zero on Dirichlet boundary rows."""
    h2 = grid.h**2
    if grid.bc == "periodic":
        return (
            np.roll(f, 1, axis=0)
            + np.roll(f, -1, axis=0)
            + np.roll(f, 1, axis=1)
            + np.roll(f, -1, axis=1)
            - 4.0 * f
        ) / h2
    out = np.zeros_like(f)
    out[1:-1, 1:-1] = (
        f[:-2, 1:-1] + f[2:, 1:-1] + f[1:-1, :-2] + f[1:-1, 2:] - 4.0 * f[1:-1, 1:-1]
    ) / h2
    return out


def flat_laplacian_9pt(grid, f):
    """9-point (diagonally corrected) Laplacian; zero on Dirichlet boundary.

    Independent discretization used to cross-check curvature routes: its
    truncation error differs from the 5-point operator at O(h^2).
    """
    h2 = grid.h**2
    if grid.bc == "periodic":
        ax = np.roll(f, 1, 0) + np.roll(f, -1, 0) + np.roll(f, 1, 1) + np.roll(f, -1, 1)
        di = (
            np.roll(np.roll(f, 1, 0), 1, 1)
            + np.roll(np.roll(f, 1, 0), -1, 1)
            + np.roll(np.roll(f, -1, 0), 1, 1)
            + np.roll(np.roll(f, -1, 0), -1, 1)
        )
        return (4.0 * ax + di - 20.0 * f) / (6.0 * h2)
    out = np.zeros_like(f)
    ax = f[:-2, 1:-1] + f[2:, 1:-1] + f[1:-1, :-2] + f[1:-1, 2:]
    di = f[:-2, :-2] + f[:-2, 2:] + f[2:, :-2] + f[2:, 2:]
    out[1:-1, 1:-1] = (4.0 * ax + di - 20.0 * f[1:-1, 1:-1]) / (6.0 * h2)
    return out


def laplacian_matrix(grid):
    """Sparse 5-point Laplacian over the unknown nodes.

    Dirichlet: unknowns are the interior nodes; couplings into the boundary
    are dropped (they belong on the right-hand side).  Periodic: all nodes
    with wraparound.  Returns (L, unknown_index) where unknown_index maps
    flattened node index -> unknown number (-1 for fixed nodes).
    """
    ny, nx = grid.shape
    mask = grid.interior_mask().ravel()
    idx = -np.ones(ny * nx, dtype=np.int64)
    idx[mask] = np.arange(mask.sum())
    h2 = grid.h**2

    rows, cols, vals = [], [], []
    jj, ii = np.divmod(np.flatnonzero(mask), nx)
    center = idx[jj * nx + ii]
    rows.append(center)
    cols.append(center)
    vals.append(np.full(center.size, -4.0 / h2))
    for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        if grid.bc == "periodic":
            nj, ni = (jj + dj) % ny, (ii + di) % nx
        else:
            nj, ni = jj + dj, ii + di
        neighbor = idx[nj * nx + ni]
        keep = neighbor >= 0
        rows.append(center[keep])
        cols.append(neighbor[keep])
        vals.append(np.full(keep.sum(), 1.0 / h2))
    L = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(center.size, center.size),
    )
    return L, idx.reshape(ny, nx)
