"""Intrinsic distance transforms, curvature sublevel domains, and decay fits.

Distances are measured in the induced metric e^{2 lambda} |dz|^2; the
first-order fast-marching solver treats e^{lambda} as a cost per unit of
Euclidean background length.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import measure

from .errors import BadThreshold, InsufficientData


@dataclass
class DistanceField:
    """Intrinsic distance to a source set; degenerate when the source is empty."""

    rho: np.ndarray
    degenerate: bool = False


@dataclass
class DomainStats:
    k: float
    mask: np.ndarray
    component_count: int
    t_levels: np.ndarray
    boundary_lengths: np.ndarray
    total_abs_K: float


@dataclass
class DecayFit:
    C: float
    alpha: float
    rmse: float
    window: tuple
    n_points: int = 0


def distance_field(lam, grid, source_mask):
    """First-order fast marching under the metric e^{2 lambda} |dz|^2.

    4-neighbor upwind quadratic updates plus direct diagonal candidates
    (8-neighborhood); deterministic.  An empty source returns +inf everywhere
    with the Barbot-type degeneracy flag set.
    """
    source_mask = np.asarray(source_mask, dtype=bool)
    if not source_mask.any():
        return DistanceField(np.full(grid.shape, np.inf), degenerate=True)
    ny, nx = grid.shape
    h = grid.h
    cost = np.exp(np.asarray(lam, dtype=float))
    T = np.full((ny, nx), np.inf)
    known = np.zeros((ny, nx), dtype=bool)
    T[source_mask] = 0.0
    heap = [(0.0, int(k)) for k in np.flatnonzero(source_mask)]
    heapq.heapify(heap)
    sqrt2 = np.sqrt(2.0)

    def update(j, i):
        f = cost[j, i] * h
        a = np.inf
        if i > 0 and known[j, i - 1]:
            a = T[j, i - 1]
        if i + 1 < nx and known[j, i + 1]:
            a = min(a, T[j, i + 1])
        b = np.inf
        if j > 0 and known[j - 1, i]:
            b = T[j - 1, i]
        if j + 1 < ny and known[j + 1, i]:
            b = min(b, T[j + 1, i])
        lo = min(a, b)
        cand = lo + f
        if np.isfinite(a) and np.isfinite(b) and abs(a - b) < f:
            cand = min(cand, 0.5 * (a + b + np.sqrt(2.0 * f * f - (a - b) ** 2)))
        for dj in (-1, 1):
            for di in (-1, 1):
                jj, ii = j + dj, i + di
                if 0 <= jj < ny and 0 <= ii < nx and known[jj, ii]:
                    w = 0.5 * (cost[j, i] + cost[jj, ii]) * sqrt2 * h
                    cand = min(cand, T[jj, ii] + w)
        return cand

    while heap:
        t, k = heapq.heappop(heap)
        j, i = divmod(k, nx)
        if known[j, i]:
            continue
        known[j, i] = True
        for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            jj, ii = j + dj, i + di
            if 0 <= jj < ny and 0 <= ii < nx and not known[jj, ii]:
                cand = update(jj, ii)
                if cand < T[jj, ii]:
                    T[jj, ii] = cand
                    heapq.heappush(heap, (cand, jj * nx + ii))
    return DistanceField(T, degenerate=False)


def sublevel_boundary_lengths(fields, lam, grid, k, t_levels, rho=None):
    """Mask D^k = {K < k}, its components, and the lengths of the t-fronts.

    Front lengths come from sub-cell contour extraction on the distance field
    at levels t (perturbed by +h/7 against grid-aligned level sets), weighted
    by e^{lambda}; the curvature mass is the midpoint quadrature of |K| with
    area element e^{2 lambda} h^2.
    """
    if not (-1.0 / 3.0 < k < 0.0):
        raise BadThreshold(f"k = {k} outside (-1/3, 0)")
    K = fields.K if hasattr(fields, "K") else np.asarray(fields)
    mask = K < k
    labels, count = ndimage.label(mask, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    if rho is None:
        rho = distance_field(lam, grid, mask)
    t_levels = np.asarray(t_levels, dtype=float) + grid.h / 7.0
    lengths = np.array([_contour_length(rho.rho, lam, grid, t) for t in t_levels])
    total_abs_K = float(np.sum(np.abs(K) * np.exp(2.0 * lam)) * grid.h**2)
    return DomainStats(k, mask, int(count), t_levels, lengths, total_abs_K)


def _contour_length(rho, lam, grid, level):
    field = np.where(np.isfinite(rho), rho, 1e30)
    try:
        contours = measure.find_contours(field, level)
    except ValueError:
        return 0.0
    elam = np.exp(lam)
    total = 0.0
    for poly in contours:
        if len(poly) < 2:
            continue
        mids = 0.5 * (poly[:-1] + poly[1:])
        seg = np.linalg.norm(np.diff(poly, axis=0), axis=1) * grid.h
        w = ndimage.map_coordinates(elam, mids.T, order=1, mode="nearest")
        total += float(np.sum(seg * w))
    return total


def barrier_rate(n, kappa, c):
    """Decay rate forced by the comparison barrier for (Delta - c) f >= 0.

    alpha = min(sqrt(kappa), positive root of a^2 + (n-1) sqrt(kappa) a - c).
    """
    if kappa <= 0 or c <= 0 or n < 2:
        raise ValueError("need kappa > 0, c > 0, n >= 2")
    sk = np.sqrt(kappa)
    root = 0.5 * (-(n - 1) * sk + np.sqrt((n - 1) ** 2 * kappa + 4.0 * c))
    return float(min(sk, root))


def fit_decay(field, rho, window, min_points=30, floor=1e-14):
    """Least squares of ln|field| against rho over the window.

    alpha is the negated slope.  Raises InsufficientData below
    ``min_points`` usable nodes.
    """
    r = rho.rho if isinstance(rho, DistanceField) else np.asarray(rho, dtype=float)
    f = np.abs(np.asarray(field, dtype=float))
    lo, hi = window
    sel = np.isfinite(r) & (r >= lo) & (r <= hi) & (f > floor) & np.isfinite(f)
    if sel.sum() < min_points:
        raise InsufficientData(f"{int(sel.sum())} usable nodes in window {window}")
    x = r[sel]
    y = np.log(f[sel])
    coef = np.polyfit(x, y, 1)
    resid = np.polyval(coef, x) - y
    return DecayFit(
        C=float(np.exp(coef[1])),
        alpha=float(-coef[0]),
        rmse=float(np.sqrt(np.mean(resid**2))),
        window=(float(lo), float(hi)),
        n_points=int(sel.sum()),
    )


def decay_window(rho, field, lo=2.0, hi_frac=0.8, envelope_floor=1e-11, nbins=40):
    """Fit window [lo, hi] with the noise-floor tail cut off.

    The upper end is 0.8 of the largest finite rho, shortened to where the
    per-bin max envelope of |field| falls below ``envelope_floor`` (solver
    tolerance noise would otherwise flatten the fitted slope).
    """
    r = rho.rho if isinstance(rho, DistanceField) else np.asarray(rho, dtype=float)
    f = np.abs(np.asarray(field, dtype=float))
    finite = np.isfinite(r)
    if not finite.any():
        return (lo, lo)
    hi = hi_frac * float(r[finite].max())
    edges = np.linspace(lo, hi, nbins + 1)
    for b in range(nbins):
        sel = finite & (r >= edges[b]) & (r < edges[b + 1])
        if sel.any() and float(f[sel].max()) < envelope_floor:
            hi = edges[b]
            break
    return (lo, float(hi))


def coarea_check(phi, rho, lam, grid, t_lo, t_hi, n_levels=40):
    """Compare the area integral of phi over {t_lo < rho < t_hi} with the
    co-area slicing integral over the level sets of rho.  Returns both values
    and the relative error."""
    r = rho.rho if isinstance(rho, DistanceField) else rho
    sel = np.isfinite(r) & (r > t_lo) & (r < t_hi)
    lhs = float(np.sum(phi[sel] * np.exp(2.0 * lam[sel])) * grid.h**2)
    ts = np.linspace(t_lo, t_hi, n_levels)
    line = []
    elam = np.exp(lam)
    weighted = phi * elam  # contour integrand: phi ds, ds carries one e^lambda
    for t in ts:
        fieldv = np.where(np.isfinite(r), r, 1e30)
        total = 0.0
        for poly in measure.find_contours(fieldv, t):
            if len(poly) < 2:
                continue
            mids = 0.5 * (poly[:-1] + poly[1:])
            seg = np.linalg.norm(np.diff(poly, axis=0), axis=1) * grid.h
            w = ndimage.map_coordinates(weighted, mids.T, order=1, mode="nearest")
            total += float(np.sum(seg * w))
        line.append(total)
    rhs = float(np.trapezoid(line, ts))
    rel = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    return {"area_integral": lhs, "coarea_integral": rhs, "rel_error": rel}


def growth_check(stats, eps_h=0.0):
    """Corollary-type front growth: length(s) - length(t) bounded linearly.

    Returns the worst slack of
    (4 pi components + total |K|) (s - t) + eps_h - [len(s) - len(t)] >= 0
    over all sampled pairs t <= s.
    """
    T = 4.0 * np.pi * stats.component_count + stats.total_abs_K
    worst = np.inf
    pairs = 0
    ts, ls = stats.t_levels, stats.boundary_lengths
    for a in range(len(ts)):
        for b in range(a + 1, len(ts)):
            slack = T * (ts[b] - ts[a]) + eps_h - (ls[b] - ls[a])
            worst = min(worst, float(slack))
            pairs += 1
    return {"bound_coefficient": T, "worst_slack": worst, "pairs": pairs}


def harnack_constant(K, lam, grid, radius=1.0, n_centers=40, rng=None, floor=1e-300):
    """Empirical constant sup_{B(x,1)} |K| / |K(x)| over sampled centers."""
    absK = np.abs(K)
    interior = grid.interior_mask()
    idx = np.flatnonzero(interior.ravel() & (absK.ravel() > floor))
    if idx.size == 0:
        return {"C_H": np.nan, "centers": 0}
    if rng is None:
        rng = np.random.default_rng(0)
    pick = rng.choice(idx, size=min(n_centers, idx.size), replace=False)
    worst = 1.0
    for k in np.sort(pick):
        j, i = divmod(int(k), grid.nx)
        mask = np.zeros(grid.shape, dtype=bool)
        mask[j, i] = True
        rho = distance_field(lam, grid, mask).rho
        ball = rho <= radius
        worst = max(worst, float(absK[ball].max() / absK[j, i]))
    return {"C_H": worst, "centers": int(pick.size)}


def integral_ratios(fields, lam, grid, vbar_samples=None):
    """Ratios of surface integrals of |K|^a (and mean V-bar) to that of |K|."""
    area = np.exp(2.0 * lam) * grid.h**2
    absK = np.abs(fields.K)
    denom = float(np.sum(absK * area))
    out = {}
    for a in (0.5, 2.0):
        num = float(np.sum(absK**a * area))
        out[f"absK^{a}"] = num / denom if denom > 0 else np.nan
    if vbar_samples:
        vbar = np.asarray([v for _, v in vbar_samples], dtype=float)
        total_area = float(np.sum(area))
        out["vbar_mean_area"] = float(vbar.mean()) * total_area / denom if denom > 0 else np.nan
    out["degenerate"] = bool(denom <= 0)
    return out


def diagnostics_report(fields, lam, grid, stats, vbar_samples=None, q=None, rho=None, rng=None, eps_h=None):
    """Assembled domain diagnostics: growth, co-area, curvature mass, Harnack,
    and integral ratios.  Curvature-mass ratios are included only when q has
    zeros inside the domain; none of the open-question ratios is asserted."""
    if len(stats.t_levels) < 5:
        raise ValueError("need at least 5 t-levels")
    if eps_h is None:
        eps_h = 10.0 * grid.h**2
    report = {"growth": growth_check(stats, eps_h=eps_h)}
    if rho is None:
        rho = distance_field(lam, grid, stats.mask)
    if not rho.degenerate:
        t_lo = float(stats.t_levels[0])
        t_hi = float(stats.t_levels[-1])
        report["coarea"] = coarea_check(np.exp(-np.minimum(rho.rho, 700.0)), rho, lam, grid, t_lo, t_hi)
    else:
        report["coarea"] = {"degenerate": True}
    report["harnack"] = harnack_constant(fields.K, lam, grid, rng=rng)
    report["ratios"] = integral_ratios(fields, lam, grid, vbar_samples)
    if q is not None and len(q.roots()) and np.any(q.min_root_distance(grid.zgrid()) < max(grid.x1 - grid.x0, grid.y1 - grid.y0)):
        report["curvature_mass"] = curvature_mass_ratios(
            fields, lam, grid, q, [6.0 * grid.h, 3.0 * grid.h, 1.5 * grid.h]
        )
    report["degenerate_instance"] = bool(rho.degenerate or stats.component_count == 0)
    return report


def curvature_mass_ratios(fields, lam, grid, q, exclusion_radii):
    """total |K| over punctured domains vs the zero count of q.

    The puncture contribution is Richardson-extrapolated (in the squared
    radius) from each consecutive pair of shrinking exclusion radii; the
    spread of the extrapolated masses is the stability indicator.  The mass
    is reported against both candidate constants 2 pi and 4 pi, asserting
    neither.
    """
    z = grid.zgrid()
    dist = q.min_root_distance(z)
    n_zeros = len(q.roots())
    area = np.exp(2.0 * lam) * grid.h**2
    radii = sorted(exclusion_radii, reverse=True)
    masses = {}
    for r in radii:
        outside = dist >= r
        masses[r] = float(np.sum(np.abs(fields.K[outside]) * area[outside]))
    extrapolated = []
    for r1, r2 in zip(radii[:-1], radii[1:]):  # r1 > r2
        I1, I2 = masses[r1], masses[r2]
        extrapolated.append((r1**2 * I2 - r2**2 * I1) / (r1**2 - r2**2))
    best = extrapolated[-1] if extrapolated else masses[radii[0]]
    out = {
        "masses": {str(r): masses[r] for r in radii},
        "extrapolated_masses": extrapolated,
        "extrapolated_mass": best,
        "stability_spread": (max(extrapolated) / min(extrapolated) - 1.0) if len(extrapolated) > 1 else 0.0,
        "zero_count": n_zeros,
        "ratio_2pi": best / (2.0 * np.pi * n_zeros) if n_zeros else np.nan,
        "ratio_4pi": best / (4.0 * np.pi * n_zeros) if n_zeros else np.nan,
    }
    return out
