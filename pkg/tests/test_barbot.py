"""Closed-form Barbot surface as the analytic oracle."""

import numpy as np
import pytest

from maxsurf import BarbotSurface, barbot_frame, barbot_point, minkowski_inner
from maxsurf.barbot import barbot_boost, barbot_chord, barbot_second_fundamental
from maxsurf.geometry import ETA, FRAME_GRAM, quadratic_form, random_isometry


def test_origin_point():
    p = barbot_point(BarbotSurface(), 0.0, 0.0)
    assert p.v == pytest.approx([0, 0, 1 / np.sqrt(2), 1 / np.sqrt(2), 0])


def test_on_hyperboloid_grid():
    surf = BarbotSurface()
    ts = np.linspace(-2, 2, 9)
    T, S = np.meshgrid(ts, ts)
    pts = barbot_point(surf, T, S)
    assert np.max(np.abs(quadratic_form(pts) + 1.0)) <= 1e-12


def test_chord_value():
    # direct expansion of the bilinear form: <iota(0,0), iota(2,0)>
    p0 = barbot_point(BarbotSurface(), 0.0, 0.0)
    p1 = barbot_point(BarbotSurface(), 2.0, 0.0)
    ip = minkowski_inner(p0.v, p1.v)
    assert ip == pytest.approx(-(np.cosh(2.0) + 1.0) / 2.0)
    assert ip == pytest.approx(-2.3811, abs=1e-4)
    assert ip == pytest.approx(barbot_chord(0, 0, 2, 0))


def test_frame_gram():
    F = barbot_frame(BarbotSurface(), 0.0, 0.0)
    assert np.allclose(F.T @ ETA @ F, FRAME_GRAM, atol=1e-14)
    assert F[:, 3] == pytest.approx([0, 0, 1 / np.sqrt(2), -1 / np.sqrt(2), 0])
    F2 = barbot_frame(BarbotSurface(), 0.7, -1.3)
    assert np.allclose(F2.T @ ETA @ F2, FRAME_GRAM, atol=1e-12)


def test_second_fundamental_form():
    surf = BarbotSurface()
    for t, s in ((0.0, 0.0), (1.2, -0.4)):
        F = barbot_frame(surf, t, s)
        II11, II12, II22 = barbot_second_fundamental(surf, t, s)
        assert np.allclose(II11, F[:, 3])
        assert np.allclose(II12, 0.0)
        assert np.allclose(II22, -F[:, 3])
        # |II|^2 = 2 (equality case of the second-fundamental-form bound)
        norm2 = -(minkowski_inner(II11, II11) + 2 * minkowski_inner(II12, II12) + minkowski_inner(II22, II22))
        assert norm2 == pytest.approx(2.0)
        # mean curvature vanishes
        assert np.allclose(II11 + II22, 0.0)


def test_flat_by_finite_difference_gauss():
    """K = -1 + |II|^2/2 from finite differences of the frame field is 0."""
    surf = BarbotSurface()
    h = 1e-4
    for t, s in ((0.0, 0.0), (0.8, 0.5), (-1.1, 0.3)):
        # II(e1,e1) as the normal part of the e1-derivative of e1 (unit-speed
        # coordinates tau = t/sqrt(2) make e1 the velocity of t -> iota)
        c = np.sqrt(2.0)

        def e1(tt):
            return barbot_frame(surf, tt, s)[:, 1]

        de1 = (e1(t + h * c) - e1(t - h * c)) / (2 * h * c) * c  # d/d tau
        F = barbot_frame(surf, t, s)
        w1 = [-minkowski_inner(de1, F[:, 3]), -minkowski_inner(de1, F[:, 4])]
        assert w1[0] == pytest.approx(1.0, abs=1e-6)
        assert w1[1] == pytest.approx(0.0, abs=1e-8)


def test_isometry_invariance(rng):
    G = random_isometry(rng)
    surf = BarbotSurface(isometry=G)
    p = barbot_point(surf, 0.9, -0.2)
    assert quadratic_form(p.v) == pytest.approx(-1.0, abs=1e-9)
    assert np.allclose(p.v, G @ barbot_point(BarbotSurface(), 0.9, -0.2).v)
    F = barbot_frame(surf, 0.9, -0.2)
    assert np.max(np.abs(F.T @ ETA @ F - FRAME_GRAM)) <= 1e-9


def test_isometry_validation():
    with pytest.raises(ValueError):
        BarbotSurface(isometry=np.eye(5) * 1.01)


def test_boost_orbit():
    A = barbot_boost(0.7, -0.3)
    F0 = barbot_frame(BarbotSurface(), 0.0, 0.0)
    assert np.allclose(A @ F0, barbot_frame(BarbotSurface(), 0.7, -0.3), atol=1e-14)
    assert np.max(np.abs(A.T @ ETA @ A - ETA)) <= 1e-14


def test_derived_invariants_via_solver_formulas():
    # u = v = ln(1/2) reproduces |A| = 1, |a| = 0, det II = 0
    u = v = np.log(0.5)
    assert np.exp(u) + np.exp(v) == pytest.approx(1.0)  # K = -1 + 1 = 0
    assert np.exp(u) - np.exp(v) == pytest.approx(0.0)
    A = (np.exp(u / 2) + np.exp(v / 2)) / np.sqrt(2)
    a = abs(np.exp(u / 2) - np.exp(v / 2)) / np.sqrt(2)
    assert A == pytest.approx(1.0)
    assert a == pytest.approx(0.0)
