import math

import numpy as np
import pytest

from elastoscat.quadrature import dunavant_rule, graded_duffy_rule, near_rule, self_rule, unpack


def rect_inverse_distance(a, b, z):
    # int over [0,a]x[0,b] of 1/sqrt(x^2 + y^2 + z^2)
    d = math.sqrt(a * a + b * b + z * z)
    val = a * math.log((b + d) / math.hypot(a, z)) + b * math.log((a + d) / math.hypot(b, z))
    return val - (z * math.atan(a * b / (z * d)) if z > 0 else 0.0)


def rectangle(a, b):
    p = np.array([[0, 0, 0], [a, 0, 0], [a, b, 0], [0, b, 0]], dtype=float)
    return np.array([[p[0], p[1], p[2]], [p[0], p[2], p[3]]])


@pytest.mark.parametrize("z", [0.0, 1e-4, 1e-2, 0.1, 0.5])
def test_graded_rule_against_closed_form(z):
    tris = rectangle(0.7, 0.4)
    x = np.array([[0.0, 0.0, z]] * 2)
    s, _ = graded_duffy_rule(x, tris)
    exact = rect_inverse_distance(0.7, 0.4, z) / (4 * math.pi)
    assert s.sum() == pytest.approx(exact, rel=2e-4)


def test_graded_rule_off_corner_target():
    # target above an interior point: split the rectangle into four pieces
    tris = rectangle(1.0, 1.0)
    z = 0.05
    x = np.array([[0.3, 0.6, z]] * 2)
    s, _ = graded_duffy_rule(x, tris)
    exact = sum(rect_inverse_distance(a, b, z) for a in (0.3, 0.7) for b in (0.6, 0.4)) / (4 * math.pi)
    assert s.sum() == pytest.approx(exact, rel=2e-4)


def test_self_rule_matches_graded_rule(rng):
    base = np.array([[0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]])
    tris = base[None] + 0.25 * rng.normal(size=(20, 3, 3))
    s1, t1 = self_rule(tris)
    s2, t2 = graded_duffy_rule(tris.mean(axis=1), tris)
    assert np.allclose(s1, s2, rtol=1e-4)
    assert np.abs(t1 - t2).max() < 1e-4 * np.abs(t1).max()


def test_traces_agree():
    """trace of the r r^T / r^3 kernel equals the 1/r kernel."""
    tris = rectangle(0.5, 0.5)
    x = np.array([[0.2, 0.3, 0.1]] * 2)
    s, t = graded_duffy_rule(x, tris)
    assert np.allclose(np.trace(unpack(t), axis1=1, axis2=2), s, rtol=1e-12)


def test_near_rule_tiers_agree_with_refined_reference(rng):
    tri = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]], dtype=float)
    area = np.array([0.5])
    for dist in (0.8, 1.5, 3.0, 6.0):
        x = np.array([[0.3, 0.3, dist]])
        ratio = np.array([np.linalg.norm(x[0] - tri[0].mean(axis=0)) / math.sqrt(2)])
        s, t = near_rule(x, tri, area, ratio)
        sr, tr = dunavant_rule(x, tri, area, levels=3)
        assert s[0] == pytest.approx(sr[0], rel=1e-4)
        assert np.abs(t - tr).max() < 1e-4 * np.abs(tr).max()
