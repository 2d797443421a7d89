import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastoscat.medium import (
    SERIES_SWITCH,
    IncidentPlaneWave,
    dynamic_remainder_at_origin,
    green_bound_constants,
    kelvin_tensor,
    kupradze_coefficients,
    kupradze_gradient,
    kupradze_series,
    kupradze_tensor,
    make_medium,
)

points = st.lists(st.floats(-1, 1), min_size=3, max_size=3).map(np.array)


def test_medium_speeds():
    m = make_medium(2.0, 0.5, 3.0)
    assert m.c_p == pytest.approx(math.sqrt(3.0))
    assert m.c_s == pytest.approx(math.sqrt(0.5))
    assert m.kappa_s == pytest.approx(3.0 / math.sqrt(0.5))


@pytest.mark.parametrize("lam, mu", [(1.0, 0.0), (-1.0, 1.0)])
def test_medium_rejects_invalid_lame(lam, mu):
    with pytest.raises(ValueError):
        make_medium(lam, mu, 1.0)


def test_closed_form_matches_series_across_switch(medium):
    r = np.geomspace(1e-3, 0.6, 60)
    x = np.zeros((len(r), 3))
    y = np.stack([r, 0.3 * r, -0.2 * r], axis=1)
    closed = kupradze_tensor(medium, x, y)
    series = np.array([kupradze_series(medium, a, b) for a, b in zip(x, y)])
    assert np.abs(closed - series).max() / np.abs(series).max() < 1e-13


def test_coefficients_continuous_at_switch():
    m = make_medium(1.0, 1.0, 2.0)
    r0 = SERIES_SWITCH / m.kappa_s
    a, b = kupradze_coefficients(m, np.array([r0 * (1 - 1e-12), r0 * (1 + 1e-12)]))
    assert abs(a[0] - a[1]) < 1e-9 * abs(a[0])
    assert abs(b[0] - b[1]) < 1e-9 * abs(b[0])


def test_static_limit_is_kelvin():
    x, y = np.array([0.1, 0.2, 0.3]), np.array([-0.4, 0.1, 0.5])
    k0 = kupradze_tensor(make_medium(1.5, 0.7, 0.0), x, y)
    assert np.allclose(k0, kelvin_tensor(1.5, 0.7, x, y), rtol=0, atol=1e-15)
    small = kupradze_tensor(make_medium(1.5, 0.7, 1e-4), x, y)
    assert np.abs(small - k0).max() < 1e-3


def test_remainder_at_origin():
    m = make_medium(1.0, 1.0, 1.0)
    r = 1e-5
    g = kupradze_tensor(m, np.zeros(3), np.array([r, 0, 0])) - kelvin_tensor(1.0, 1.0, np.zeros(3), np.array([r, 0, 0]))
    assert np.abs(g - dynamic_remainder_at_origin(m)).max() < 1e-4


@settings(max_examples=40, deadline=None)
@given(points, points)
def test_symmetry_and_reciprocity(x, y):
    if np.linalg.norm(x - y) < 1e-3:
        return
    m = make_medium(1.0, 1.0, 1.0)
    g = kupradze_tensor(m, x, y)
    assert np.allclose(g, g.T, atol=1e-14)
    assert np.allclose(g, kupradze_tensor(m, y, x), atol=1e-14)


def test_gradient_matches_finite_differences(medium):
    x = np.array([0.2, -0.1, 0.4])
    y = np.array([-0.3, 0.25, 0.1])
    g = kupradze_gradient(medium, x, y)
    h = 1e-5
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (kupradze_tensor(medium, x, y + e) - kupradze_tensor(medium, x, y - e)) / (2 * h)
        assert np.abs(fd - g[k]).max() < 1e-8


def test_navier_equation_residual():
    """(mu Lap + (lam+mu) grad div + omega^2) Gamma e_j = 0 away from the source."""
    m = make_medium(1.3, 0.8, 1.7)
    y = np.zeros(3)
    x0 = np.array([0.6, -0.3, 0.5])
    h = 2e-3
    e = np.eye(3)

    def u(x):
        return kupradze_tensor(m, x, y)

    lap = sum(u(x0 + h * e[k]) - 2 * u(x0) + u(x0 - h * e[k]) for k in range(3)) / h**2
    graddiv = np.zeros((3, 3), dtype=complex)
    for i in range(3):
        for k in range(3):
            d2 = (u(x0 + h * e[i] + h * e[k]) - u(x0 + h * e[i] - h * e[k]) - u(x0 - h * e[i] + h * e[k]) + u(x0 - h * e[i] - h * e[k])) / (4 * h * h)
            graddiv[i] += d2[k]
    res = m.mu * lap + (m.lam + m.mu) * graddiv + m.omega**2 * u(x0)
    assert np.abs(res).max() < 1e-4 * np.abs(m.omega**2 * u(x0)).max()


def test_singular_evaluation_rejected(medium):
    with pytest.raises(ValueError, match="singular"):
        kupradze_tensor(medium, np.zeros(3), np.zeros(3))


def test_bound_constants_frozen_values():
    g = green_bound_constants(make_medium(1.0, 1.0, 1.0), 1.0)
    assert g.c7 == pytest.approx(5 / 3)
    assert g.c9 == pytest.approx(4.0)
    assert g.n_omega == 14
    assert g.c8 == pytest.approx(4.2706, abs=1e-4)
    assert g.c10 == pytest.approx(4.434, abs=1e-3)
    assert g.c_ring == pytest.approx(g.c10)
    assert g.reliable


def test_bounds_hold_on_random_pairs(rng):
    m = make_medium(1.0, 1.0, 1.0)
    diam = math.sqrt(3)
    g = green_bound_constants(m, diam)
    x = rng.uniform(-0.5, 0.5, (2000, 3))
    y = rng.uniform(-0.5, 0.5, (2000, 3))
    r = np.linalg.norm(x - y, axis=1)
    G = kupradze_tensor(m, x, y)
    dG = kupradze_gradient(m, x, y)
    assert np.all(np.linalg.norm(G, 2, axis=(1, 2)) <= g.c7 / (4 * math.pi * r))
    grad_norm = np.sqrt((np.abs(dG) ** 2).sum(axis=(1, 2, 3)))
    assert np.all(grad_norm <= g.c9 / (4 * math.pi * r**2) + g.c_ring)


def test_bound_constants_flag_large_wavenumber():
    m = make_medium(1.0, 1.0, 5.0)
    with pytest.warns(RuntimeWarning, match="wavenumber"):
        g = green_bound_constants(m, math.sqrt(3))
    assert not g.reliable
    with pytest.raises(ValueError):
        green_bound_constants(m, math.sqrt(3), strict=True)


def test_incident_wave_validation_and_field(medium):
    with pytest.raises(ValueError):
        IncidentPlaneWave((0, 0, 1), (0, 1, 1))
    w = IncidentPlaneWave.along([0, 0, 2], 1.0, 0.0)
    x = np.array([[0.0, 0.0, 0.3]])
    assert np.allclose(w.field(medium, x), [[0, 0, np.exp(1j * medium.kappa_p * 0.3)]])
    s = IncidentPlaneWave.along([1, 1, 0], 0.0, 1.0)
    f = s.field(medium, np.random.default_rng(1).random((5, 3)))
    assert np.allclose(f @ np.asarray(s.theta), 0)
