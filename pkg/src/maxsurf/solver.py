"""Gauge-fixed coupled elliptic system for maximal surfaces, and derived fields.

Unknowns on a flat background |dz|^2: the conformal factor lambda (induced
metric e^{2 lambda} |dz|^2) and mu2.  Away from zeros of q the system reads

    R_lambda = D0 lambda - e^{2 lambda} + 8 |q| e^{-2 lambda} cosh(mu2) = 0,
    R_mu     = D0 mu2 - 16 |q| e^{-2 lambda} sinh(mu2) = 0,

with D0 the flat 5-point Laplacian.  The remaining norm is recovered as
mu1 = (1/2) ln|q| + ln 2 - 2 lambda; the constant state e^{4 lambda} = 8 |q|,
mu2 = 0 reproduces u = v = ln(1/2).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, SingularJacobian, ZeroOfQOnGrid
from .grids import Grid2D, flat_laplacian, flat_laplacian_9pt, laplacian_matrix

#: Grids with more unknowns than this use a preconditioned iterative solve.
DIRECT_SOLVE_LIMIT = 512 * 512

#: Default zero-of-q exclusion radius, in units of the grid spacing.
EXCLUSION_RADIUS_CELLS = 3.0


@dataclass
class FieldState:
    """Grid fields (lambda, mu2) in the conformal gauge."""

    lam: np.ndarray
    mu2: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.mu2 = np.asarray(self.mu2, dtype=float)
        if self.lam.shape != self.mu2.shape:
            raise ValueError("lambda and mu2 shapes differ")
        if not (np.all(np.isfinite(self.lam)) and np.all(np.isfinite(self.mu2))):
            raise ValueError("field state contains non-finite entries")

    def copy(self):
        return FieldState(self.lam.copy(), self.mu2.copy())


@dataclass
class GeometryFields:
    """Pointwise geometric fields derived from a solved state."""

    u: np.ndarray
    v: np.ndarray
    mu1: np.ndarray
    K: np.ndarray
    detII: np.ndarray
    normII2: np.ndarray
    axisA: np.ndarray
    axisa: np.ndarray
    K_fd: np.ndarray


def check_exclusion(q, grid, strict, exclusion_radius=None):
    """Raise ZeroOfQOnGrid when a node is too close to a root and strict."""
    radius = exclusion_radius if exclusion_radius is not None else EXCLUSION_RADIUS_CELLS * grid.h
    d = q.min_root_distance(grid.zgrid())
    if strict and np.any(d < radius):
        k = int(np.argmin(d))
        raise ZeroOfQOnGrid(
            f"node {np.unravel_index(k, grid.shape)} within {radius:.3g} of a root of q"
        )
    return d


def residual(state, q, grid, strict=True, exclusion_radius=None):
    """(R_lambda, R_mu) on interior nodes; boundary rows are zero for Dirichlet."""
    check_exclusion(q, grid, strict, exclusion_radius)
    Q = np.abs(q(grid.zgrid()))
    Rl = flat_laplacian(grid, state.lam)
    Rm = flat_laplacian(grid, state.mu2)
    interior = grid.interior_mask()
    e2l = np.exp(2.0 * state.lam)
    em2l = np.exp(-2.0 * state.lam)
    Rl_full = Rl - e2l + 8.0 * Q * em2l * np.cosh(state.mu2)
    Rm_full = Rm - 16.0 * Q * em2l * np.sinh(state.mu2)
    Rl_full[~interior] = 0.0
    Rm_full[~interior] = 0.0
    return Rl_full, Rm_full


def _jacobian(state, Q, grid, L, idx):
    """Sparse Jacobian of the stacked residual over unknown nodes."""
    interior = idx >= 0
    lam = state.lam[interior]
    mu2 = state.mu2[interior]
    qv = Q[interior]
    e2l = np.exp(2.0 * lam)
    em2l = np.exp(-2.0 * lam)
    d_ll = sp.diags(-2.0 * e2l - 16.0 * qv * em2l * np.cosh(mu2))
    d_lm = sp.diags(8.0 * qv * em2l * np.sinh(mu2))
    d_ml = sp.diags(32.0 * qv * em2l * np.sinh(mu2))
    d_mm = sp.diags(-16.0 * qv * em2l * np.cosh(mu2))
    return sp.bmat([[L + d_ll, d_lm], [d_ml, L + d_mm]], format="csc")


def solve(
    q,
    grid,
    boundary,
    init,
    tol=1e-10,
    max_iter=25,
    strict=True,
    exclusion_radius=None,
    source=None,
    armijo_c=1e-4,
    step_floor=2.0**-20,
):
    """Damped Newton solve of the gauge-fixed system.

    ``boundary`` is a FieldState whose boundary rows provide Dirichlet data
    (ignored for periodic grids, which need zero-free q on the fundamental
    domain).  ``init`` supplies the initial interior guess.  ``source`` is an
    optional pair of arrays subtracted from the residual (manufactured
    solutions).  Returns (state, info) with iteration and residual history.
    """
    if grid.bc == "periodic":
        if np.any(q.min_root_distance(grid.zgrid()) < (exclusion_radius or EXCLUSION_RADIUS_CELLS * grid.h)):
            raise ZeroOfQOnGrid("periodic runs require zero-free q on the fundamental domain")
    else:
        check_exclusion(q, grid, strict, exclusion_radius)
    if tol <= 0:
        raise ValueError("tol must be positive")

    state = init.copy()
    if grid.bc == "dirichlet":
        b = grid.boundary_mask()
        state.lam[b] = boundary.lam[b]
        state.mu2[b] = boundary.mu2[b]

    Q = np.abs(q(grid.zgrid()))
    L, idx = laplacian_matrix(grid)
    interior = idx >= 0

    def packed_residual(st):
        Rl, Rm = residual(st, q, grid, strict=False)
        if source is not None:
            Rl = Rl - np.where(interior, source[0], 0.0)
            Rm = Rm - np.where(interior, source[1], 0.0)
        return np.concatenate([Rl[interior], Rm[interior]])

    # Dirichlet couplings live in the residual via the full-array Laplacian,
    # so the unknown-only Jacobian pairs with the packed residual directly.
    r = packed_residual(state)
    history = [float(np.max(np.abs(r)))]
    for it in range(max_iter):
        if history[-1] <= tol:
            return state, {"iterations": it, "residuals": history}
        J = _jacobian(state, Q, grid, L, idx)
        rhs = -r
        if r.size <= 2 * DIRECT_SOLVE_LIMIT:
            d = spla.splu(J).solve(rhs)
        else:
            M = spla.LinearOperator(J.shape, sp.diags(1.0 / J.diagonal()).dot)
            d, info = spla.lgmres(J, rhs, M=M, rtol=1e-10, maxiter=2000)
            if info != 0:
                raise SingularJacobian(f"iterative linear solve failed (info={info})")

        f0 = 0.5 * float(r @ r)
        slope = float((J.T @ r) @ d)  # gradient of f along d; negative for a descent step
        alpha = 1.0
        n_int = interior.sum()
        while True:
            trial = state.copy()
            trial.lam[interior] += alpha * d[:n_int]
            trial.mu2[interior] += alpha * d[n_int:]
            r_trial = packed_residual(trial)
            if 0.5 * float(r_trial @ r_trial) <= f0 + armijo_c * alpha * slope:
                break
            alpha *= 0.5
            if alpha < step_floor:
                raise SingularJacobian("damped step stalled below the step-size floor")
        state = trial
        r = r_trial
        history.append(float(np.max(np.abs(r))))

    if history[-1] <= tol:
        return state, {"iterations": max_iter, "residuals": history}
    raise NoConvergence(max_iter, history[-1])


def derived_fields(state, q, grid, strict=True, exclusion_radius=None, q_floor=0.0):
    """All geometric fields of the converged state, plus the independent K_fd.

    mu1 = (1/2) ln|q| + ln 2 - 2 lambda; u = 2 mu1 + mu2; v = 2 mu1 - mu2;
    K = -1 + 2 e^{2 mu1} cosh mu2; det II = e^u - e^v; |II|^2 = 2(e^u + e^v);
    axes |A| = sqrt(2) e^{mu1} cosh(mu2/2), |a| = sqrt(2) e^{mu1} sinh(|mu2|/2).
    K_fd = -e^{-2 lambda} D9 lambda is the independent finite-difference
    curvature route (9-point Laplacian, so its truncation differs from the
    solver's operator at O(h^2); NaN on the boundary ring).
    """
    check_exclusion(q, grid, strict, exclusion_radius)
    z = grid.zgrid()
    mu1 = 0.5 * q.log_abs(z, floor=q_floor) + np.log(2.0) - 2.0 * state.lam
    mu2 = state.mu2
    u = 2.0 * mu1 + mu2
    v = 2.0 * mu1 - mu2
    e2m1 = np.exp(2.0 * mu1)
    K = -1.0 + 2.0 * e2m1 * np.cosh(mu2)
    detII = np.exp(u) - np.exp(v)
    normII2 = 2.0 * (np.exp(u) + np.exp(v))
    em1 = np.exp(mu1)
    axisA = np.sqrt(2.0) * em1 * np.cosh(mu2 / 2.0)
    axisa = np.sqrt(2.0) * em1 * np.sinh(np.abs(mu2) / 2.0)
    K_fd = np.full(grid.shape, np.nan)
    interior = grid.interior_mask()
    lap = flat_laplacian_9pt(grid, state.lam)
    K_fd[interior] = (-np.exp(-2.0 * state.lam) * lap)[interior]
    return GeometryFields(u, v, mu1, K, detII, normII2, axisA, axisa, K_fd)


def bound_suite(fields, grid, h=None, eps_scale=10.0, exclude=None, k_allowance=None):
    """Interior-node bound checks on a converged solution.

    K <= 1e-8, |II|^2 <= 2 + 1e-8, u, v <= ln(2/3) + eps_h and
    mu1 <= (1/2) ln(1/2) + eps_h with eps_h = eps_scale * h^2.  Boundary rows
    carry Dirichlet data, not solution values, and are excluded, as are the
    punctured neighborhoods of zeros of q when ``exclude`` is given.

    ``k_allowance`` widens the K bound by the gauge harmonic defect
    (1/4) e^{-2 lambda} |D0 ln|q||, which is identically zero for constant q
    and accounts for ln|q| not being discretely harmonic otherwise.
    """
    h = grid.h if h is None else h
    eps_h = eps_scale * h * h
    m = grid.interior_mask()
    if exclude is not None:
        m = m & ~exclude
    k_slack = 0.0
    if k_allowance is not None:
        k_slack = float(np.max(k_allowance[m]))
    ln23 = np.log(2.0 / 3.0)
    checks = {
        "K_max": (float(np.max(fields.K[m])), 1e-8 + k_slack),
        "normII2_max": (float(np.max(fields.normII2[m])), 2.0 + 1e-8 + 2.0 * k_slack),
        "u_max": (float(np.max(fields.u[m])), ln23 + eps_h),
        "v_max": (float(np.max(fields.v[m])), ln23 + eps_h),
        "mu1_max": (float(np.max(fields.mu1[m])), 0.5 * np.log(0.5) + eps_h),
    }
    out = {k: {"value": val, "bound": bound, "pass": bool(val <= bound)} for k, (val, bound) in checks.items()}
    out["all_pass"] = all(v["pass"] for k, v in out.items() if isinstance(v, dict))
    return out


def barbot_state(q, grid, mu2=None, q_floor=None):
    """Zero-curvature reference state for q: e^{4 lambda} = 8 |q|, mu2 = 0.

    Near zeros of q the reference degenerates logarithmically; ``q_floor``
    caps |q| from below so the state stays finite (the interior values are
    only a Newton initial guess there).
    """
    Q = np.abs(q(grid.zgrid()))
    if q_floor is None and np.any(Q == 0.0):
        q_floor = 1e-8 * float(Q.max())
    if q_floor:
        Q = np.maximum(Q, q_floor)
    lam = 0.25 * np.log(8.0 * Q)
    m = np.zeros(grid.shape) if mu2 is None else np.asarray(mu2, dtype=float)
    return FieldState(lam, m)


def save_state(path, state, grid):
    """Flat node-major CSV (x, y, lambda, mu2) plus a JSON grid sidecar."""
    X, Y = grid.meshgrid()
    data = np.column_stack([X.ravel(), Y.ravel(), state.lam.ravel(), state.mu2.ravel()])
    tmp = path + ".tmp"
    np.savetxt(tmp, data, delimiter=",", header="x,y,lambda,mu2", comments="")
    os.replace(tmp, path)
    meta = {
        "x0": grid.x0, "x1": grid.x1, "y0": grid.y0, "y1": grid.y1,
        "nx": grid.nx, "ny": grid.ny, "h": grid.h, "bc": grid.bc,
    }
    sidecar = os.path.splitext(path)[0] + ".json"
    tmp = sidecar + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(meta, fh, indent=2)
    os.replace(tmp, sidecar)


def load_state(path):
    """Inverse of save_state; returns (state, grid)."""
    sidecar = os.path.splitext(path)[0] + ".json"
    with open(sidecar) as fh:
        meta = json.load(fh)
    grid = Grid2D(meta["x0"], meta["x1"], meta["y0"], meta["y1"], meta["nx"], meta["ny"], meta["bc"])
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    lam = data[:, 2].reshape(grid.shape)
    mu2 = data[:, 3].reshape(grid.shape)
    return FieldState(lam, mu2), grid
