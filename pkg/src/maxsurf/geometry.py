"""Primitives for R^{2,3}, the hyperboloid double cover of H^{2,2}, and Fermi charts.

The signature ordering is fixed once and for all as (+,+,-,-,-):
Q(x) = x1^2 + x2^2 - x3^2 - x4^2 - x5^2. All other modules inherit it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NonUnitTangent, NotUnit, OutOfDisc, WrongSheet

SIGNATURE = np.array([1.0, 1.0, -1.0, -1.0, -1.0])
ETA = np.diag(SIGNATURE)

#: Gram matrix of an adapted frame (sigma, e1, e2, n1, n2).
FRAME_GRAM = np.diag([-1.0, 1.0, 1.0, -1.0, -1.0])


def minkowski_inner(a, b):
    """Bilinear form of R^{2,3}; accepts arrays broadcast over the last axis."""
    return np.sum(np.asarray(a) * np.asarray(b) * SIGNATURE, axis=-1)


def quadratic_form(a):
    return minkowski_inner(a, a)


def _scale_tol(v, atol):
    # Quadratic invariants of large vectors cannot beat float rounding of the
    # squared components; widen absolute tolerances by the squared magnitude.
    m = float(np.max(np.sum(np.asarray(v) ** 2, axis=-1), initial=1.0))
    return atol * max(1.0, m)


@dataclass(frozen=True)
class HPoint:
    """Point of the double cover {Q = -1}, stored as its R^{2,3} coordinates."""

    v: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "v", v)
        if v.shape != (5,):
            raise ValueError(f"HPoint needs 5 coordinates, got shape {v.shape}")
        q = quadratic_form(v)
        if abs(q + 1.0) > _scale_tol(v, self.tol):
            raise ValueError(f"point off the hyperboloid: Q = {q!r}")


@dataclass(frozen=True)
class TangentVec:
    """Tangent vector at ``base``: Tan_x is identified with x-perp."""

    base: HPoint
    dir: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        d = np.asarray(self.dir, dtype=float)
        object.__setattr__(self, "dir", d)
        ip = minkowski_inner(self.base.v, d)
        if abs(ip) > _scale_tol(np.concatenate([self.base.v, d]), self.tol):
            raise ValueError(f"vector not tangent: <base, dir> = {ip!r}")


class GeodesicClass(enum.Enum):
    SPACELIKE = "spacelike"
    LIGHTLIKE = "lightlike"
    TIMELIKE = "timelike"
    NONE = "none"


def classify_pair(x, y, tol=1e-9):
    """Type of the geodesic joining two hyperboloid points, from <x,y> alone."""
    ip = float(minkowski_inner(np.asarray(x), np.asarray(y)))
    if abs(ip + 1.0) <= tol:
        return GeodesicClass.LIGHTLIKE
    if ip < -1.0:
        return GeodesicClass.SPACELIKE
    if -1.0 < ip < 1.0:
        return GeodesicClass.TIMELIKE
    return GeodesicClass.NONE


def geodesic_eval(x, w, t, tol=1e-10):
    """Evaluate the geodesic through x with initial velocity w at parameter t.

    ``w`` must be unit spacelike, null, or unit timelike (within ``tol``);
    callers normalize, so that null vectors pass through unscaled.  Accepts
    HPoint/TangentVec or bare arrays; scalar or array ``t``.
    """
    xv = x.v if isinstance(x, HPoint) else np.asarray(x, dtype=float)
    wv = w.dir if isinstance(w, TangentVec) else np.asarray(w, dtype=float)
    n = float(quadratic_form(wv))
    t = np.asarray(t, dtype=float)
    if abs(n - 1.0) <= tol:
        out = np.cosh(t)[..., None] * xv + np.sinh(t)[..., None] * wv
    elif abs(n) <= tol:
        out = xv + t[..., None] * wv
    elif abs(n + 1.0) <= tol:
        out = np.cos(t)[..., None] * xv + np.sin(t)[..., None] * wv
    else:
        raise NonUnitTangent(f"<w,w> = {n!r} not in {{+1, 0, -1}}")
    if out.ndim == 1:
        # construction noise of the inputs is amplified by cosh^2(t); the
        # round-trip tolerance class covers it
        return HPoint(out, tol=1e-10)
    return out


@dataclass(frozen=True)
class FermiChart:
    """Orthogonal splitting R^{2,3} = E + F with E positive and F negative.

    ``basisE`` is 2x5, ``basisF`` is 3x5; rows are <.,.>-orthonormal with
    <e,e> = +1 on E and <f,f> = -1 on F.  ``axis`` selects the F basis vector
    whose coefficient fixes the time orientation of lifts.
    """

    basisE: np.ndarray
    basisF: np.ndarray
    tolerance: float = 1e-10
    axis: int = 0

    def __post_init__(self):
        bE = np.asarray(self.basisE, dtype=float).reshape(2, 5)
        bF = np.asarray(self.basisF, dtype=float).reshape(3, 5)
        object.__setattr__(self, "basisE", bE)
        object.__setattr__(self, "basisF", bF)
        B = np.vstack([bE, bF])
        gram = B @ ETA @ B.T
        if not np.allclose(gram, np.diag([1, 1, -1, -1, -1]), atol=1e-12):
            raise ValueError("chart basis is not signature-orthonormal")


def standard_chart(tolerance=1e-10):
    return FermiChart(np.eye(5)[:2], np.eye(5)[2:], tolerance=tolerance)


def fermi_forward(chart, u, s):
    """psi(u, s) = 2/(1-|u|^2) u + (1+|u|^2)/(1-|u|^2) s on the hyperboloid."""
    u = np.asarray(u, dtype=float).reshape(2)
    s = np.asarray(s, dtype=float).reshape(3)
    r2 = float(u @ u)
    if r2 >= 1.0:
        raise OutOfDisc(f"|u| = {np.sqrt(r2)!r} >= 1")
    if abs(np.linalg.norm(s) - 1.0) > chart.tolerance:
        raise NotUnit(f"|s| = {np.linalg.norm(s)!r} != 1")
    p = (2.0 / (1.0 - r2)) * (u @ chart.basisE) + ((1.0 + r2) / (1.0 - r2)) * (
        s @ chart.basisF
    )
    return HPoint(p, tol=max(1e-12, chart.tolerance))


def fermi_inverse(chart, p):
    """Invert fermi_forward; raises WrongSheet on the antipodal lift.

    The E coefficients of p are a_i = <p, e_i>; the F coefficients are
    b_j = -<p, f_j> (negative basis vectors).  With N = |b| >= 1 one solves
    (1+r^2)/(1-r^2) = N for r^2 and rescales.
    """
    pv = p.v if isinstance(p, HPoint) else np.asarray(p, dtype=float)
    a = minkowski_inner(chart.basisE, pv)
    b = -minkowski_inner(chart.basisF, pv)
    N = float(np.linalg.norm(b))
    if b[chart.axis] <= 0.0:
        raise WrongSheet("F part oriented against the chart convention")
    r2 = (N - 1.0) / (N + 1.0)
    u = a * (1.0 - r2) / 2.0
    s = b / N
    return u, s


def random_isometry(rng, max_tries=200):
    """Random element of O(2,3) by <.,.>-Gram-Schmidt on Gaussian vectors.

    Retries until the orthogonalized columns carry the signature pattern
    (+,+,-,-,-) with norms bounded away from degeneracy.
    """
    for _ in range(max_tries):
        raw = rng.normal(size=(5, 5))
        cols, ok = _try_gram_schmidt(raw, (1.0, 1.0, -1.0, -1.0, -1.0))
        if ok:
            return cols
    raise RuntimeError("failed to draw a non-degenerate O(2,3) element")


def _try_gram_schmidt(raw, signs):
    cols = np.zeros((5, 5))
    for i in range(5):
        v = raw[:, i].copy()
        for j in range(i):
            v -= signs[j] * minkowski_inner(v, cols[:, j]) * cols[:, j]
        q = float(quadratic_form(v))
        if q * signs[i] < 1e-6:
            return cols, False
        cols[:, i] = v / np.sqrt(abs(q))
    return cols, True


def frame_gram_error(F, form=None):
    """Max-norm deviation of F^T form F from the adapted-frame Gram matrix."""
    form = ETA if form is None else form
    return float(np.max(np.abs(F.T @ form @ F - FRAME_GRAM)))


_FRAME_SIGNS = (-1.0, 1.0, 1.0, -1.0, -1.0)


def orthonormalize_frame(F, form=None):
    """Gram-Schmidt in the fixed column order (sigma, e1, e2, n1, n2).

    ``form`` is the symmetric bilinear form the columns live in (the ambient
    signature matrix by default; the adapted-frame Gram for relative-gauge
    matrices).  Deterministic; preserves the adapted-frame structure for
    small drifts; raises on causal-character collapse.
    """
    form = ETA if form is None else form
    out = np.array(F, dtype=float, copy=True)
    for i in range(5):
        v = out[:, i]
        for j in range(i):
            v = v - _FRAME_SIGNS[j] * float(v @ form @ out[:, j]) * out[:, j]
        q = float(v @ form @ v)
        if q * _FRAME_SIGNS[i] <= 0.0:
            raise ValueError(f"frame column {i} lost its causal character")
        out[:, i] = v / np.sqrt(abs(q))
    return out
