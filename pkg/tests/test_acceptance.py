"""Acceptance criteria, one test per criterion, at their stated tolerances.

Each test prints a single PASS/FAIL line; heavy solved instances are cached
at module scope because the criteria share them.
"""

import math
import time

import numpy as np
import pytest

from maxsurf import Grid2D, QuarticDifferential, derived_fields
from maxsurf.barbot import BARBOT_MU1, GRID_TO_BARBOT, BarbotSurface, barbot_cloud, barbot_frame, barbot_point
from maxsurf.decay import (
    barrier_rate,
    coarea_check,
    curvature_mass_ratios,
    decay_window,
    distance_field,
    fit_decay,
    growth_check,
    sublevel_boundary_lengths,
)
from maxsurf.frames import (
    assemble_connection,
    defect_away_from_corners,
    flatness_defect,
    integrate_frame,
    second_fundamental_coefficients,
)
from maxsurf.geometry import FRAME_GRAM, frame_gram_error
from maxsurf.hull import (
    FrameCloud,
    LiftedCloud,
    jacobian_lower_bound_root,
    normal_jacobian,
    nu_jacobian_fd,
    slice_profile,
)
from maxsurf.solver import barbot_state, bound_suite, solve
from tests.conftest import perturbed_boundary, solve_perturbed

Q1 = QuarticDifferential([1.0])
_cache = {}


def report(num, ok, detail=""):
    print(f"\nACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def barbot_run():
    if "barbot" not in _cache:
        t0 = time.perf_counter()
        grid = Grid2D(0, 10, 0, 10, 101, 101)
        bnd = barbot_state(Q1, grid)
        state, info = solve(Q1, grid, bnd, bnd.copy(), tol=1e-12)
        _cache["barbot"] = (grid, state, info, time.perf_counter() - t0)
    return _cache["barbot"]


def perturbed_run(n, L=4.0, profile="sin2", amplitude=0.2):
    key = ("pert", n, L, profile, amplitude)
    if key not in _cache:
        grid = Grid2D(0, L, 0, L, n, n)
        state, _ = solve_perturbed(Q1, grid, amplitude=amplitude, profile=profile)
        _cache[key] = (grid, state)
    return _cache[key]


def decay_run():
    if "decay" not in _cache:
        t0 = time.perf_counter()
        grid = Grid2D(0, 30, 0, 30, 301, 301)
        bnd = perturbed_boundary(grid, 0.2, "const")
        state, info = solve(Q1, grid, bnd, bnd.copy(), tol=1e-10)
        rho = distance_field(state.lam, grid, grid.boundary_mask())
        conn = assemble_connection(state, Q1, grid)
        ff = integrate_frame(conn, grid, barbot_frame(BarbotSurface(), 0, 0))
        _cache["decay"] = (grid, state, rho, ff, time.perf_counter() - t0)
    return _cache["decay"]


def test_criterion_1_barbot_oracle():
    grid, state, info, elapsed = barbot_run()
    gf = derived_fields(state, Q1, grid)
    ok = (
        info["residuals"][-1] <= 1e-12
        and np.max(np.abs(gf.u - np.log(0.5))) <= 1e-10
        and np.max(np.abs(gf.v - np.log(0.5))) <= 1e-10
        and np.max(np.abs(gf.K)) <= 1e-10
        and np.max(np.abs(gf.detII)) <= 1e-10
        and elapsed < 5.0
    )
    report(1, ok, f"residual={info['residuals'][-1]:.2e} u-dev={np.max(np.abs(gf.u - np.log(0.5))):.2e} t={elapsed:.2f}s")


def test_criterion_2_identity_suite():
    details = []
    ok = True
    for instance in ("barbot", "perturbed"):
        if instance == "barbot":
            grid, state, _, _ = barbot_run()
        else:
            grid, state = perturbed_run(81)
        gf = derived_fields(state, Q1, grid)
        gauss = float(np.max(np.abs(gf.K - (-1.0 + np.exp(gf.u) + np.exp(gf.v)))))
        bounds = bound_suite(gf, grid)
        ok &= gauss <= 1e-12 and bounds["all_pass"]
        details.append(f"{instance}: gauss={gauss:.1e} bounds={bounds['all_pass']}")
    errs = {}
    for n in (41, 81, 161):
        grid, state = perturbed_run(n)
        gf = derived_fields(state, Q1, grid)
        interior = grid.interior_mask()
        errs[n] = float(np.max(np.abs((gf.K - gf.K_fd)[interior])))
    r1, r2 = errs[41] / errs[81], errs[81] / errs[161]
    ok &= r1 >= 3.0 and r2 >= 3.0
    details.append(f"K_fd ratios {r1:.2f}, {r2:.2f}")
    report(2, ok, "; ".join(details))


def test_criterion_3_frame_reconstruction():
    t0 = time.perf_counter()
    grid = Grid2D(0, 4, 0, 4, 81, 81)
    state = barbot_state(Q1, grid)
    conn = assemble_connection(state, Q1, grid)
    defect = float(flatness_defect(conn, grid).max())
    ff = integrate_frame(conn, grid, barbot_frame(BarbotSurface(), 0, 0))
    X, Y = grid.meshgrid()
    ref = barbot_point(BarbotSurface(), GRID_TO_BARBOT * (X - 2.0), GRID_TO_BARBOT * (Y - 2.0))
    sigma_err = float(np.max(np.abs(ff.sigma() - ref)))
    post = max(
        frame_gram_error(ff.G[j, i], form=FRAME_GRAM)
        for j in range(0, grid.ny, 8)
        for i in range(0, grid.nx, 8)
    )
    orders = {}
    for n in (81, 161):
        g = Grid2D(0, 2, 0, 2, n, n)
        st, _ = solve_perturbed(Q1, g, profile="sin2", tol=3e-11)
        c = assemble_connection(st, Q1, g)
        orders[n] = defect_away_from_corners(flatness_defect(c, g), g, corner_radius=0.5)
    order = math.log2(orders[81] / orders[161])
    elapsed = time.perf_counter() - t0
    ok = defect <= 1e-3 and order >= 1.9 and sigma_err <= 1e-5 and post <= 1e-8 and elapsed < 30.0
    report(3, ok, f"defect={defect:.1e} order={order:.2f} sigma={sigma_err:.1e} gram_post={post:.1e} t={elapsed:.1f}s")


def test_criterion_4_normal_jacobian():
    grid, state = perturbed_run(201, profile="sin2")
    conn = assemble_connection(state, Q1, grid)
    ff = integrate_frame(conn, grid, barbot_frame(BarbotSurface(), 0, 0))
    w111, w211, w112, w212 = second_fundamental_coefficients(state, Q1, grid)
    rng = np.random.default_rng(42)
    rels = []
    for _ in range(50):
        j = int(rng.integers(4, grid.ny - 4))
        i = int(rng.integers(4, grid.nx - 4))
        psi = float(rng.uniform(0, 2 * np.pi))
        tau = float(rng.uniform(0.05, 1.0))
        a = w111[j, i] * np.cos(psi) + w211[j, i] * np.sin(psi)
        b = w112[j, i] * np.cos(psi) + w212[j, i] * np.sin(psi)
        closed = normal_jacobian(a, b, tau)
        fd = nu_jacobian_fd(ff, state, conn, grid, (j, i), psi, tau)
        rels.append(abs(fd - closed) / max(closed, 1e-6))
    max_rel = max(rels)
    root = jacobian_lower_bound_root()
    taus = np.linspace(1e-4, 0.3686, 300)
    floor_ok = True
    for j, i in ((50, 50), (100, 100), (30, 160), (170, 60)):
        for psi in np.linspace(0, np.pi, 7):
            a = w111[j, i] * np.cos(psi) + w211[j, i] * np.sin(psi)
            b = w112[j, i] * np.cos(psi) + w212[j, i] * np.sin(psi)
            vals = [normal_jacobian(a, b, t) for t in taus]
            floor_ok &= min(vals) >= 0.5 - 1e-12
    ok = max_rel <= 1e-3 and floor_ok and root > 0.3686
    report(4, ok, f"max_rel={max_rel:.2e} (50 triples), floor>=1/2 on |n|<=0.3686: {floor_ok}, root={root:.4f}")


def test_criterion_5_decay():
    grid, state, rho, ff, t_solve = decay_run()
    t0 = time.perf_counter()
    gf = derived_fields(state, Q1, grid)
    k = -1.0 / 30.0
    barrier = barrier_rate(2, 1.0, 4.0 * (1.0 / 3.0 + k))
    assert barrier == pytest.approx(0.70416, abs=1e-5)
    fits = {}
    for name, arr in (
        ("mu2", np.abs(state.mu2)),
        ("mutilde1", np.abs(gf.mu1 - BARBOT_MU1)),
        ("K", np.abs(gf.K)),
    ):
        window = decay_window(rho, arr, lo=2.0)
        fits[name] = fit_decay(arr, rho, window)
    rng = np.random.default_rng(3)
    fc = FrameCloud.subsample(ff, max_points=40_000, rng=rng)
    rel = ff.slice_reliable()
    samples = []
    for rr in np.linspace(0.6, 10.0, 24):
        j = 150
        cols = np.flatnonzero(rel[j, :150])
        col = int(cols[np.argmin(np.abs(rho.rho[j, cols] - rr))])
        prof = fc.profile((j, col), m=64, step=0.01)
        samples.append((float(rho.rho[j, col]), prof.polygon_area))
    rs = np.array([s[0] for s in samples])
    vs = np.array([s[1] for s in samples])
    pos = vs > 0
    floor = 4.0 * float(np.median(vs[pos][rs[pos] >= np.quantile(rs[pos], 0.75)]))
    live = pos & (vs > floor) & (rs >= 2.0)
    coef = np.polyfit(rs[live], np.log(vs[live]), 1)
    resid = np.polyval(coef, rs[live]) - np.log(vs[live])
    vbar_alpha = float(-coef[0])
    vbar_rmse = float(np.sqrt(np.mean(resid**2)))
    elapsed = t_solve + (time.perf_counter() - t0)
    ok = (
        fits["mu2"].alpha >= barrier - 0.05
        and fits["mutilde1"].alpha > 0 and fits["mutilde1"].rmse <= 0.15
        and fits["K"].alpha > 0 and fits["K"].rmse <= 0.15
        and vbar_alpha > 0 and vbar_rmse <= 0.15
        and elapsed < 300.0
    )
    report(
        5, ok,
        f"mu2 a={fits['mu2'].alpha:.3f} (>= {barrier - 0.05:.3f}); "
        f"mutilde1 a={fits['mutilde1'].alpha:.2f} rmse={fits['mutilde1'].rmse:.3f}; "
        f"K a={fits['K'].alpha:.2f} rmse={fits['K'].rmse:.3f}; "
        f"vbar a={vbar_alpha:.2f} rmse={vbar_rmse:.3f} (n={int(live.sum())}); t={elapsed:.0f}s",
    )


def test_criterion_6_slice_geometry():
    grid, state, rho, ff, _ = decay_run()
    rng = np.random.default_rng(99)
    fc = FrameCloud.subsample(ff, max_points=20_000, rng=rng)
    rel = ff.slice_reliable() & grid.interior_mask()
    idx = np.flatnonzero(rel.ravel())
    pick = rng.choice(idx, size=100, replace=False)
    worst = 0.0
    for k in pick:
        j, i = divmod(int(k), grid.nx)
        prof = fc.profile((j, i), m=16, step=0.02)
        worst = max(worst, float(np.max(prof.extents)))
    cloud = LiftedCloud(barbot_cloud(6.0, 101))
    F = barbot_frame(BarbotSurface(), 0.0, 0.0)
    vols = {}
    for m in (32, 64, 128):
        prof = slice_profile(cloud, F, m=m, step=0.01)
        vols[m] = prof.volume_estimate
        worst = max(worst, float(np.max(prof.extents)))
    # 100 more sampled base points on the Barbot closed-form cloud
    ts = np.linspace(-4, 4, 10)
    for t in ts:
        for s in ts:
            prof = slice_profile(cloud, barbot_frame(BarbotSurface(), t, s), m=16, step=0.02)
            worst = max(worst, float(np.max(prof.extents)))
    ok = worst <= np.pi / 2 + 1e-6 and vols[128] <= 0.05 and vols[32] > vols[64] > vols[128]
    report(6, ok, f"max extent={worst:.5f} (<= {np.pi/2 + 1e-6:.5f}); barbot V(m=32,64,128)={vols[32]:.4f},{vols[64]:.4f},{vols[128]:.4f}")


def test_criterion_7_domain_growth():
    class Fields:
        def __init__(self, K):
            self.K = K

    k = -0.1
    grid = Grid2D(-3, 3, -3, 3, 201, 201)
    X, Y = grid.meshgrid()
    Kd = np.where(np.hypot(X, Y) <= 0.6, k - 0.1, 0.0)
    lam0 = np.zeros(grid.shape)
    stats = sublevel_boundary_lengths(Fields(Kd), lam0, grid, k, [0.3, 0.6, 0.9, 1.2, 1.5])
    g_synth = growth_check(stats, eps_h=10 * grid.h**2)
    rho_d = distance_field(lam0, grid, stats.mask)
    co_synth = coarea_check(np.exp(-rho_d.rho), rho_d, lam0, grid, 0.3, 1.5)

    gridp, statep = perturbed_run(161)
    gfp = derived_fields(statep, Q1, gridp)
    rho_p = distance_field(statep.lam, gridp, gridp.boundary_mask())
    statsp = sublevel_boundary_lengths(gfp, statep.lam, gridp, -1.0 / 30.0, [0.5, 1.0, 1.5, 2.0, 2.5], rho=rho_p)
    g_solved = growth_check(statsp, eps_h=10 * gridp.h**2)
    co_solved = coarea_check(np.exp(-rho_p.rho), rho_p, statep.lam, gridp, 0.5, 2.0)
    ok = (
        g_synth["worst_slack"] >= 0.0
        and g_solved["worst_slack"] >= 0.0
        and co_synth["rel_error"] <= 0.05
        and co_solved["rel_error"] <= 0.05
    )
    report(
        7, ok,
        f"slack synth={g_synth['worst_slack']:.3f} solved={g_solved['worst_slack']:.3f}; "
        f"coarea synth={co_synth['rel_error']:.3%} solved={co_solved['rel_error']:.3%}",
    )


def test_criterion_8_curvature_mass():
    qz = QuarticDifferential([0.0, 1.0])
    values = []
    ratios = {}
    for n in (151, 201):
        grid = Grid2D(-5, 5, -5, 5, n, n)
        bnd = barbot_state(qz, grid)
        state, _ = solve(qz, grid, bnd, bnd.copy(), tol=1e-10, strict=False)
        gf = derived_fields(state, qz, grid, strict=False, q_floor=1e-300)
        out = curvature_mass_ratios(gf, state.lam, grid, qz, [0.4, 0.2, 0.1])
        values.extend(out["extrapolated_masses"])
        ratios[n] = (out["ratio_2pi"], out["ratio_4pi"])
    spread = max(values) / min(values) - 1.0
    ok = spread <= 0.10 and all(np.isfinite(v) for v in values)
    report(
        8, ok,
        f"extrapolated masses={['%.4f' % v for v in values]} spread={spread:.2%}; "
        f"ratio vs 2pi={ratios[201][0]:.4f}, vs 4pi={ratios[201][1]:.4f} (reported, not asserted)",
    )
