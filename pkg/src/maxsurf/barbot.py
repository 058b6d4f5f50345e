"""Closed-form Barbot surface: the flat maximal product-of-geodesics surface.

Serves as the analytic oracle for the solver, the frame integrator and the
hull machinery.  The embedding is

    iota(t, s) = (sinh t, sinh s, cosh t, cosh s, 0) / sqrt(2),

whose induced metric is (dt^2 + ds^2)/2; unit-speed coordinates are
tau = t/sqrt(2).  Derived invariants: u = v = ln(1/2), K = 0, det II = 0,
|II|_2^2 = 2, axis lengths |A| = 1 and |a| = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ETA, HPoint

#: Conformal factor of the gauge-fixed Barbot state for q == 1: e^{4 lambda} = 8.
BARBOT_LAMBDA = 0.25 * np.log(8.0)
BARBOT_U = np.log(0.5)
BARBOT_MU1 = 0.5 * np.log(0.5)

#: Grid coordinate -> Barbot coordinate scale: t = GRID_TO_BARBOT * x for q == 1.
GRID_TO_BARBOT = np.sqrt(2.0) * np.exp(BARBOT_LAMBDA)


@dataclass(frozen=True)
class BarbotSurface:
    """Barbot surface post-composed with an isometry of O(2,3)."""

    isometry: np.ndarray = field(default_factory=lambda: np.eye(5))

    def __post_init__(self):
        G = np.asarray(self.isometry, dtype=float).reshape(5, 5)
        object.__setattr__(self, "isometry", G)
        if np.max(np.abs(G.T @ ETA @ G - ETA)) > 1e-12:
            raise ValueError("isometry does not preserve the bilinear form")


def barbot_point(surf, t, s):
    """iota(t, s), transported by the surface isometry.

    Scalar (t, s) give an HPoint; array inputs broadcast to a (..., 5) array.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    p = np.stack(
        [np.sinh(t), np.sinh(s), np.cosh(t), np.cosh(s), np.zeros_like(t + s)],
        axis=-1,
    ) / np.sqrt(2.0)
    p = p @ surf.isometry.T
    if p.ndim == 1:
        return HPoint(p)
    return p


def barbot_frame(surf, t, s):
    """Adapted frame (sigma, e1, e2, n1, n2) as a 5x5 matrix of columns.

    The tangents are unit for the induced metric; both normals are unit
    negative.  Gram matrix: diag(-1, 1, 1, -1, -1).
    """
    ct, st = np.cosh(t), np.sinh(t)
    cs, ss = np.cosh(s), np.sinh(s)
    r2 = np.sqrt(2.0)
    sigma = np.array([st, ss, ct, cs, 0.0]) / r2
    e1 = np.array([ct, 0.0, st, 0.0, 0.0])
    e2 = np.array([0.0, cs, 0.0, ss, 0.0])
    n1 = np.array([st, -ss, ct, -cs, 0.0]) / r2
    n2 = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    F = np.column_stack([sigma, e1, e2, n1, n2])
    return surf.isometry @ F


def barbot_boost(t, s):
    """The abelian isometry A(t, s) whose orbit of iota(0,0) is the surface.

    Boost by t in the (x1, x3) plane and by s in the (x2, x4) plane;
    barbot_frame(t, s) = A(t, s) @ barbot_frame(0, 0) exactly.
    """
    ct, st = np.cosh(t), np.sinh(t)
    cs, ss = np.cosh(s), np.sinh(s)
    return np.array(
        [
            [ct, 0.0, st, 0.0, 0.0],
            [0.0, cs, 0.0, ss, 0.0],
            [st, 0.0, ct, 0.0, 0.0],
            [0.0, ss, 0.0, cs, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ]
    )


def barbot_second_fundamental(surf, t, s):
    """II in the frame of barbot_frame: II(e1,e1) = n1, II(e1,e2) = 0."""
    F = barbot_frame(surf, t, s)
    n1 = F[:, 3]
    return n1, np.zeros(5), -n1


def barbot_chord(t1, s1, t2, s2):
    """<iota(t1,s1), iota(t2,s2)> = -(cosh(t1-t2) + cosh(s1-s2))/2."""
    return -(np.cosh(t1 - t2) + np.cosh(s1 - s2)) / 2.0


def barbot_cloud(extent, n_side, rng=None, jitter=0.0):
    """Grid sample of the Barbot lift on [-extent, extent]^2 in (t, s).

    Returns an (n_side^2, 5) array.  Optional uniform jitter de-aligns the
    sample while keeping the boundary rows exact.
    """
    ts = np.linspace(-extent, extent, n_side)
    T, S = np.meshgrid(ts, ts, indexing="ij")
    if jitter and rng is not None:
        J = (rng.uniform(-jitter, jitter, size=T.shape), rng.uniform(-jitter, jitter, size=S.shape))
        T = T + J[0] * (np.abs(T) < extent)
        S = S + J[1] * (np.abs(S) < extent)
    surf = BarbotSurface()
    return barbot_point(surf, T.ravel(), S.ravel())
