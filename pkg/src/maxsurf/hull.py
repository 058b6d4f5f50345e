"""Convex-hull membership, normal slices of the convex core, and the
normal-exponential Jacobian.

Membership of geodesic points in Conv(S) = P Conv(S-hat) is projective: the
ray through exp_x(tau n) meets the hull of the lift iff the perspective image
x-hat + tan(tau) n lies in the hull of the perspective-projected cloud
y -> y / (-<y, x-hat>).  The perspective map is projective-linear, so hulls
map to hulls and membership along a marched ray is monotone (the marched
curve becomes a straight line).  Finite clouds under-estimate the hull, so
every one-sided check here errs conservatively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linprog

from .errors import FrameMismatch
from .geometry import frame_gram_error, minkowski_inner

#: Default feasibility tolerance on hull-distance queries.
LP_TOL = 1e-9

#: Chord slack accepted when validating a lifted cloud.
CHORD_TOL = 1e-6


@dataclass
class LiftedCloud:
    """Sampled lift of a spacelike surface, with its source grid indices."""

    points: np.ndarray
    source_indices: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 5)
        if self.source_indices is None:
            self.source_indices = np.arange(len(self.points))

    def validate(self, chord_tol=CHORD_TOL, check_origin=True, block=2048, rel_accuracy=1e-6):
        """Chord condition <x,y> <= -1 + slack pairwise, and 0 not in the hull.

        The per-pair slack widens with rel_accuracy |x||y|: products of
        cosh-sized coordinates carry the points' own relative errors, so the
        O(1) threshold is only resolvable for pairs with moderate
        coordinates, which is where a genuine spacelike-chord violation
        would show up.
        """
        X = self.points
        sig = np.array([1.0, 1.0, -1.0, -1.0, -1.0])
        Xs = X * sig
        norms2 = np.sum(X * X, axis=1)
        worst = -np.inf
        for start in range(0, len(X), block):
            G = Xs[start : start + block] @ X.T
            slack = chord_tol + rel_accuracy * np.sqrt(
                np.outer(norms2[start : start + block], norms2)
            )
            worst = max(worst, float((G + 1.0 - slack).max()))
        if worst > 0.0:
            raise ValueError(f"cloud violates the spacelike chord condition by {worst!r}")
        if check_origin:
            # per-point positive rescaling preserves membership of 0 (it is a
            # conic condition), and normalized points keep the LP conditioned
            unit = X / np.linalg.norm(X, axis=1, keepdims=True)
            if hull_contains(LiftedCloud(unit), np.zeros(5), tol=1e-7):
                raise ValueError("origin lies in the convex hull of the lift")
        return worst


def cloud_from_frames(frames, grid, max_points=10_000, rng=None):
    """Subsample the reconstructed immersion into a LiftedCloud.

    Subsampling shrinks the hull, which keeps one-sided slice checks sound.
    """
    sigma = frames[..., :, 0].reshape(-1, 5)
    n = sigma.shape[0]
    if n <= max_points:
        pick = np.arange(n)
    elif rng is None:
        pick = np.linspace(0, n - 1, max_points).astype(int)
    else:
        pick = np.sort(rng.choice(n, size=max_points, replace=False))
    return LiftedCloud(sigma[pick], pick)


class MinNormEngine:
    """Wolfe min-norm-point queries against a fixed point set, warm-startable.

    distance(p) solves min |w^T X - p| over convex weights w; successive
    queries reuse the previous support set, which makes marching along rays
    cheap.  Falls back to the LP route on the rare non-converged query.
    """

    def __init__(self, points, gap_tol=1e-12, max_iter=200):
        self.X = np.ascontiguousarray(points, dtype=float)
        self.scale2 = max(1.0, float(np.max(np.sum(self.X**2, axis=1))))
        self.gap_tol = gap_tol * self.scale2
        self.max_iter = max_iter
        self._support = None
        self._weights = None

    def _minor(self, S, w, p):
        """Re-solve the min-norm point over conv(X[S]), pruning the corral."""
        X = self.X
        for _ in range(len(S) + 40):
            alpha = _affine_min_norm(X[S] - p)
            if np.all(alpha > 1e-12):
                return S, alpha
            neg = alpha <= 1e-12
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, w / np.maximum(w - alpha, 1e-300), np.inf)
            theta = min(1.0, float(np.min(ratios)))
            w = (1.0 - theta) * w + theta * alpha
            w[w < 1e-14] = 0.0
            keep = w > 0.0
            if keep.sum() == 0:
                keep[int(np.argmax(alpha))] = True
                w[int(np.argmax(alpha))] = 1.0
            S = [s for s, k in zip(S, keep) if k]
            w = w[keep]
            w = w / w.sum()
        return S, w

    def distance(self, p):
        X = self.X
        if self._support is None:
            i0 = int(np.argmin(np.sum((X - p) ** 2, axis=1)))
            S, w = [i0], np.array([1.0])
        else:
            S, w = list(self._support), self._weights.copy()
        for _ in range(self.max_iter):
            S, w = self._minor(S, w, p)
            y = w @ X[S] - p
            yy = float(y @ y)
            dots = X @ y
            j = int(np.argmin(dots))
            if dots[j] - float(p @ y) >= yy - self.gap_tol or j in S:
                self._support, self._weights = S, w
                return np.sqrt(max(yy, 0.0))
            S.append(j)
            w = np.append(w, 0.0)
        self._support = None
        return _lp_distance(self.X, p)


def _affine_min_norm(Y):
    """Min-norm point of the affine hull of the rows of Y (weights sum to 1)."""
    k = len(Y)
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = Y @ Y.T
    A[k, :k] = 1.0
    A[:k, k] = 1.0
    b = np.zeros(k + 1)
    b[k] = 1.0
    try:
        sol = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(A, b, rcond=None)[0]
    return sol[:k]


def _lp_distance(X, p):
    """L-inf distance from p to the hull via one linear feasibility program."""
    n, d = X.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.zeros((2 * d, n + 1))
    A_ub[:d, :n] = X.T
    A_ub[d:, :n] = -X.T
    A_ub[:, -1] = -1.0
    b_ub = np.concatenate([p, -p])
    A_eq = np.zeros((1, n + 1))
    A_eq[0, :n] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=[(0, None)] * n + [(0, None)], method="highs")
    if not res.success:
        raise RuntimeError(f"hull distance LP failed: {res.message}")
    return float(res.fun)


def hull_contains(cloud, p, tol=LP_TOL, method="minnorm"):
    """True iff p is within tol (Euclidean) of the hull of the cloud."""
    X = cloud.points if isinstance(cloud, LiftedCloud) else np.asarray(cloud, float)
    p = np.asarray(p, dtype=float).reshape(5)
    if method == "lp":
        return _lp_distance(X, p) <= tol
    return MinNormEngine(X).distance(p) <= tol


@dataclass
class SliceProfile:
    """Radial extents of the normal slice N0_x along m fan directions."""

    base_index: tuple
    thetas: np.ndarray
    extents: np.ndarray
    volume_estimate: float
    polygon_area: float
    dropped_points: int = 0

    @staticmethod
    def fan_volume(thetas, extents):
        dtheta = 2.0 * np.pi / len(thetas)
        return float(0.5 * np.sum(extents**2) * dtheta)

    @staticmethod
    def shoelace_area(thetas, extents):
        dtheta = 2.0 * np.pi / len(thetas)
        nxt = np.roll(extents, -1)
        return float(0.5 * abs(np.sin(dtheta)) * np.sum(extents * nxt))


class ProjectedHull:
    """Perspective-projected cloud through a base point, with a query engine."""

    def __init__(self, cloud, xhat, tol=LP_TOL):
        X = cloud.points if isinstance(cloud, LiftedCloud) else np.asarray(cloud, float)
        depth = -minkowski_inner(X, xhat)
        keep = depth > 1e-9
        self.dropped = int((~keep).sum())
        P = X[keep] / depth[keep, None]
        # The base point itself is on the surface; its projection is x-hat.
        self.points = np.vstack([xhat, P])
        self.tol = tol * max(1.0, float(np.max(np.abs(self.points))))
        self.engine = MinNormEngine(self.points)

    def contains_ray(self, xhat, nhat, tau):
        if tau >= np.pi / 2 - 1e-9:
            return False
        return self.engine.distance(xhat + np.tan(tau) * nhat) <= self.tol


def _first_exit(proj, xhat, nhat, step, tau_max=np.pi / 2, xtol=1e-3):
    """Largest tau with the marched ray inside, refined by bisection."""
    lo = 0.0
    tau = step
    while tau < tau_max:
        if not proj.contains_ray(xhat, nhat, tau):
            hi = tau
            while hi - lo > xtol:
                mid = 0.5 * (lo + hi)
                if proj.contains_ray(xhat, nhat, mid):
                    lo = mid
                else:
                    hi = mid
            return lo
        lo = tau
        tau += step
    return min(lo, tau_max)


def slice_profile(cloud, frame, m=64, step=0.01, tol=LP_TOL, base_index=None):
    """Ray-march the normal fan at the frame's base point.

    ``frame`` is the 5x5 adapted frame at the base node; directions are
    n(theta) = cos(theta) n1 + sin(theta) n2.  volume_estimate is the fan
    (sector) rule sum 1/2 tau^2 dtheta; the shoelace polygon area, which
    resolves sliver-shaped slices, is reported alongside.
    """
    if m < 16:
        raise ValueError(f"need m >= 16 directions, got {m}")
    if not (0.0 < step <= 0.02):
        raise ValueError(f"marching step {step} outside (0, 0.02]")
    if frame_gram_error(frame) > 1e-6:
        raise FrameMismatch(f"base frame Gram error {frame_gram_error(frame):.3g}")
    xhat = frame[:, 0]
    n1, n2 = frame[:, 3], frame[:, 4]
    proj = ProjectedHull(cloud, xhat, tol=tol)
    thetas = 2.0 * np.pi * np.arange(m) / m
    extents = np.empty(m)
    for k, th in enumerate(thetas):
        nhat = np.cos(th) * n1 + np.sin(th) * n2
        extents[k] = _first_exit(proj, xhat, nhat, step)
    return SliceProfile(
        base_index=base_index,
        thetas=thetas,
        extents=extents,
        volume_estimate=SliceProfile.fan_volume(thetas, extents),
        polygon_area=SliceProfile.shoelace_area(thetas, extents),
        dropped_points=proj.dropped,
    )


class FrameCloud:
    """Surface sample carried in the relative frame gauge.

    Every slice base point sees the cloud through exact boost transfer
    matrices, so the projected coordinates stay O(1)-accurate arbitrarily
    far from the seed; the perspective gauge hyperplane of the base point
    becomes {c0 = 1} and the base point itself the origin of R^4.
    """

    def __init__(self, field, node_indices):
        self.field = field
        node_indices = np.asarray(node_indices)
        ny, nx = field.grid.shape
        jj, ii = np.divmod(node_indices, nx)
        self.nodes = node_indices
        self.gcols = field.G[jj, ii][:, :, 0]
        h = field.grid.h
        j0, i0 = field.seed_node
        self.ts = np.column_stack([
            field.scale_t * h * (ii - i0),
            field.scale_t * h * (jj - j0),
        ])

    @classmethod
    def subsample(cls, field, max_points=10_000, rng=None, g_norm_max=100.0):
        """Deterministic or seeded node subsample.

        Nodes where the relative gauge matrix has outgrown ``g_norm_max``
        are excluded (their coordinates would be too noisy to certify
        membership); dropping points only shrinks the hull, which keeps the
        one-sided slice checks conservative.
        """
        ny, nx = field.grid.shape
        usable = np.flatnonzero(field.g_norms().ravel() <= g_norm_max)
        n = usable.size
        if n <= max_points:
            pick = usable
        elif rng is None:
            pick = usable[np.linspace(0, n - 1, max_points).astype(int)]
        else:
            pick = np.sort(rng.choice(usable, size=max_points, replace=False))
        return cls(field, pick)

    def __len__(self):
        return len(self.nodes)

    def base_engine(self, base_node, tol=LP_TOL):
        coords = self.field.relative_columns(base_node, self.gcols, self.ts)
        depth = coords[:, 0]
        keep = depth > 1e-9
        proj = coords[keep, 1:] / depth[keep, None]
        points = np.vstack([np.zeros(4), proj])
        return _AffineSliceEngine(points, tol), int((~keep).sum())

    def profile(self, base_node, m=64, step=0.01, tol=LP_TOL):
        """Slice profile at a grid node, marched in base-frame coordinates."""
        if m < 16:
            raise ValueError(f"need m >= 16 directions, got {m}")
        if not (0.0 < step <= 0.02):
            raise ValueError(f"marching step {step} outside (0, 0.02]")
        G = self.field.G[base_node]
        if frame_gram_error(G, form=_FRAME_FORM) > 1e-6:
            raise FrameMismatch(f"base frame Gram error {frame_gram_error(G, form=_FRAME_FORM):.3g}")
        engine, dropped = self.base_engine(base_node, tol)
        thetas = 2.0 * np.pi * np.arange(m) / m
        extents = np.empty(m)
        for k, th in enumerate(thetas):
            d4 = np.array([0.0, 0.0, np.cos(th), np.sin(th)])
            extents[k] = _first_exit_fn(lambda tau: engine.contains(np.tan(tau) * d4), step)
        return SliceProfile(
            base_index=base_node,
            thetas=thetas,
            extents=extents,
            volume_estimate=SliceProfile.fan_volume(thetas, extents),
            polygon_area=SliceProfile.shoelace_area(thetas, extents),
            dropped_points=dropped,
        )

    def seppi(self, base_node, wcomps, k=8, tol=LP_TOL, ctol=1e-3):
        """seppi_probe in base-frame coordinates (see seppi_probe)."""
        if k < 8:
            raise ValueError(f"need k >= 8 tangent angles, got {k}")
        w111, w211, w112, w212 = wcomps
        phis = np.pi * np.arange(k) / k
        c1 = np.cos(2 * phis) * w111 + np.sin(2 * phis) * w112
        c2 = np.cos(2 * phis) * w211 + np.sin(2 * phis) * w212
        mags = np.hypot(c1, c2)
        if np.all(mags < 1e-9):
            return np.inf
        engine, _ = self.base_engine(base_node, tol)
        live = np.flatnonzero(mags >= 1e-9)
        dirs = [np.array([0.0, 0.0, c1[i] / mags[i], c2[i] / mags[i]]) for i in live]
        smax = float(np.max(mags))

        def ok(C):
            for d4, s in zip(dirs, mags[live]):
                tau = C * s
                if tau >= np.pi / 2 - 1e-9 or not engine.contains(np.tan(tau) * d4):
                    return False
            return True

        lo, hi = 0.0, (np.pi / 2 - 1e-6) / smax
        if ok(hi):
            return hi
        while hi - lo > ctol:
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        return lo


_FRAME_FORM = np.diag([-1.0, 1.0, 1.0, -1.0, -1.0])


class _AffineSliceEngine:
    """Membership oracle for points of the 4-d perspective slice plane."""

    def __init__(self, points, tol=LP_TOL):
        self.points = points
        self.tol = tol * max(1.0, float(np.max(np.abs(points))))
        self.engine = MinNormEngine(points)

    def contains(self, q4):
        return self.engine.distance(q4) <= self.tol


def _first_exit_fn(contains, step, tau_max=np.pi / 2, xtol=1e-3):
    lo = 0.0
    tau = step
    while tau < tau_max:
        if not contains(tau):
            hi = tau
            while hi - lo > xtol:
                mid = 0.5 * (lo + hi)
                if contains(mid):
                    lo = mid
                else:
                    hi = mid
            return lo
        lo = tau
        tau += step
    return min(lo, tau_max)


def normal_jacobian(a, b, tau, q=2):
    """|sin(tau)/tau|^{q-1} |cos^2 tau - sin^2 tau (a^2 + b^2)|.

    (a, b) are the components of II against the unit normal being followed;
    the limit value 1 is returned below tau = 1e-8.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if q < 1:
        raise ValueError("q must be >= 1")
    if tau < 1e-8:
        return 1.0
    radial = np.abs(np.sin(tau) / tau) ** (q - 1)
    return float(radial * np.abs(np.cos(tau) ** 2 - np.sin(tau) ** 2 * (a * a + b * b)))


def jacobian_lower_bound_root(bound=8.0 / 3.0, level=0.5):
    """Largest s with (sin s / s)(cos^2 s - bound sin^2 s) = level."""

    def f(s):
        return np.sin(s) / s * (np.cos(s) ** 2 - bound * np.sin(s) ** 2) - level

    hi = 0.1
    while f(hi) > 0:
        hi += 0.1
    return brentq(f, 1e-9, hi, xtol=1e-12)


def seppi_probe(cloud, frame, wcomps, k=8, tol=LP_TOL, ctol=1e-3, step=0.01):
    """Largest C with exp_x(C II(v,v)) in the hull for all sampled tangents.

    ``wcomps`` = (w111, w211, w112, w212), the II coefficients at the base
    node in the (n1, n2) frame.  Returns inf when II(v,v) is degenerate for
    every sampled v.  Bisection on C to absolute tolerance ``ctol``.
    """
    if k < 8:
        raise ValueError(f"need k >= 8 tangent angles, got {k}")
    w111, w211, w112, w212 = wcomps
    phis = np.pi * np.arange(k) / k
    c1 = np.cos(2 * phis) * w111 + np.sin(2 * phis) * w112
    c2 = np.cos(2 * phis) * w211 + np.sin(2 * phis) * w212
    mags = np.hypot(c1, c2)
    if np.all(mags < 1e-9):
        return np.inf
    xhat = frame[:, 0]
    n1, n2 = frame[:, 3], frame[:, 4]
    proj = ProjectedHull(cloud, xhat, tol=tol)
    live = mags >= 1e-9
    dirs = [(c1[i] * n1 + c2[i] * n2) / mags[i] for i in np.flatnonzero(live)]
    smax = float(np.max(mags))

    def ok(C):
        for nhat, s in zip(dirs, mags[live]):
            if not proj.contains_ray(xhat, nhat, C * s):
                return False
        return True

    lo, hi = 0.0, (np.pi / 2 - 1e-6) / smax
    if ok(hi):
        return hi
    while hi - lo > ctol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _timelike_exp_rel(x, w):
    """exp_x(w) for a timelike normal w, in base-frame coordinates."""
    s = np.sqrt(max(-float(w @ _FRAME_FORM @ w), 0.0))
    if s < 1e-14:
        return x
    return np.cos(s) * x + np.sin(s) * (w / s)


def nu_jacobian_fd(field, state, conn, grid, node, psi, tau, vert_delta=1e-5):
    """Finite-difference Jacobian of nu = exp restricted to normals.

    Recomputed on the reconstructed surface, independently of the closed
    form, in the coordinates of the base node's frame (bilinear form =
    adapted-frame Gram; base point e0, normals e3, e4): vertical columns
    differentiate the fiber coordinates, horizontal columns move the base
    node along grid directions while transporting the fiber vector with the
    normal connection (rotation by the integrated connection entry over the
    traversed edge).  The Jacobian is sqrt(|det Gram|) of the four columns,
    matching orthonormal volume ratios.
    """
    j, i = node
    e0 = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    c = np.array([np.cos(psi), np.sin(psi)])
    w0 = np.zeros(5)
    w0[3:] = tau * c
    nu0 = _timelike_exp_rel(e0, w0)

    def tangential(col):
        return col + float(col @ _FRAME_FORM @ nu0) * nu0

    cols = []
    for axis in (0, 1):
        plus = []
        arcs = []
        for sgn in (+1, -1):
            jj, ii = (j, i + sgn) if axis == 0 else (j + sgn, i)
            M = field.relative_matrix((j, i), (jj, ii))
            if axis == 0:
                edge = conn.phi_x[j, min(i, ii)]
            else:
                edge = conn.phi_y[min(j, jj), i]
            et = edge[4, 3]  # normal-rotation entry of the edge connection
            phi = sgn * et * grid.h
            rot = np.array([[np.cos(phi), np.sin(phi)], [-np.sin(phi), np.cos(phi)]])
            cc = rot @ c
            w = tau * (cc[0] * M[:, 3] + cc[1] * M[:, 4])
            plus.append(_timelike_exp_rel(M[:, 0], w))
            arcs.append(grid.h * 0.5 * (np.exp(state.lam[j, i]) + np.exp(state.lam[jj, ii])))
        cols.append(tangential((plus[0] - plus[1]) / (arcs[0] + arcs[1])))
    for k in range(2):
        dc = np.zeros(5)
        dc[3 + k] = vert_delta
        cols.append(tangential((_timelike_exp_rel(e0, w0 + dc) - _timelike_exp_rel(e0, w0 - dc)) / (2.0 * vert_delta)))
    Gm = np.empty((4, 4))
    for a in range(4):
        for b in range(4):
            Gm[a, b] = float(cols[a] @ _FRAME_FORM @ cols[b])
    return float(np.sqrt(abs(np.linalg.det(Gm))))


def slice_jacobian_ratio(profile, wcomps, n_quad=64):
    """Jacobian-weighted radial integral over the slice, relative to the fan area.

    Reported per run as the empirical two-sided comparison constant; the
    closed-form Jacobian is integrated in polar coordinates over the measured
    star region.
    """
    w111, w211, w112, w212 = wcomps
    dtheta = 2.0 * np.pi / len(profile.thetas)
    total = 0.0
    for th, ext in zip(profile.thetas, profile.extents):
        if ext <= 0:
            continue
        a = w111 * np.cos(th) + w211 * np.sin(th)
        b = w112 * np.cos(th) + w212 * np.sin(th)
        taus = (np.arange(n_quad) + 0.5) * ext / n_quad
        vals = np.array([normal_jacobian(a, b, t) * t for t in taus])
        total += vals.sum() * ext / n_quad * dtheta
    if profile.volume_estimate <= 0:
        return np.nan
    return total / profile.volume_estimate


def export_slices_csv(path, profiles):
    import os

    rows = []
    for p in profiles:
        bi = p.base_index if p.base_index is not None else (-1, -1)
        for th, ex in zip(p.thetas, p.extents):
            rows.append((bi[0], bi[1], th, ex))
    tmp = path + ".tmp"
    np.savetxt(
        tmp,
        np.asarray(rows),
        delimiter=",",
        header="base_j,base_i,theta,extent",
        comments="",
    )
    os.replace(tmp, path)
