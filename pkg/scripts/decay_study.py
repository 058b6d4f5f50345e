#!/usr/bin/env python3
"""Fitted decay rates versus boundary amplitude, against the barrier rate.

Sweeps the Dirichlet mu2 amplitude on a fixed domain and reports the fitted
log-linear rates of |mu2|, |mu1 - ln(1/2)/2| and |K| with distance to the
boundary, together with the comparison-barrier prediction for k = -1/30.
"""

import sys

import numpy as np

from maxsurf import Grid2D, QuarticDifferential, derived_fields
from maxsurf.barbot import BARBOT_MU1
from maxsurf.decay import barrier_rate, decay_window, distance_field, fit_decay
from maxsurf.solver import FieldState, solve


def run(amplitude, n=201, L=20.0):
    q = QuarticDifferential([1.0])
    grid = Grid2D(0, L, 0, L, n, n)
    mu2 = np.zeros(grid.shape)
    mu2[0, :] = mu2[-1, :] = amplitude
    mu2[:, 0] = mu2[:, -1] = amplitude
    lam = 0.25 * np.log(8.0 * np.cosh(mu2))
    bnd = FieldState(lam, mu2)
    state, info = solve(q, grid, bnd, bnd.copy(), tol=1e-10)
    gf = derived_fields(state, q, grid)
    rho = distance_field(state.lam, grid, grid.boundary_mask())
    out = {}
    for name, arr in (("mu2", np.abs(state.mu2)), ("mutilde1", np.abs(gf.mu1 - BARBOT_MU1)), ("K", np.abs(gf.K))):
        fit = fit_decay(arr, rho, decay_window(rho, arr, lo=2.0))
        out[name] = fit
    return out


if __name__ == "__main__":
    amps = [float(a) for a in sys.argv[1:]] or [0.05, 0.1, 0.2, 0.4]
    barrier = barrier_rate(2, 1.0, 4.0 * (1.0 / 3.0 - 1.0 / 30.0))
    print(f"barrier rate (k = -1/30): {barrier:.5f}")
    print(f"{'amplitude':>10} {'alpha_mu2':>10} {'alpha_mu1~':>10} {'alpha_K':>10}")
    for amp in amps:
        fits = run(amp)
        print(f"{amp:>10.3f} {fits['mu2'].alpha:>10.4f} {fits['mutilde1'].alpha:>10.4f} {fits['K'].alpha:>10.4f}")
