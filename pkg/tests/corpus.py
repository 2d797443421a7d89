"""Randomised configurations shared by the Foldy tests and the acceptance suite."""

import math

import numpy as np
from scipy.stats import special_ortho_group

from elastoscat.capacitance import CapacitanceMatrix
from elastoscat.foldy import ScattererConfiguration, precheck_invertibility


def synthetic_capacitance(rng, c_acoustic, lam, mu):
    """SPD matrix with eigenvalues inside [mu C^a, (lam + 2 mu) C^a]."""
    eig = rng.uniform(mu, lam + 2 * mu, 3) * c_acoustic
    r = special_ortho_group.rvs(3, random_state=rng)
    return CapacitanceMatrix(r @ np.diag(eig) @ r.T, c_acoustic, lam, mu, shape="synthetic")


def bounded_cluster(rng, medium, diam_omega=math.sqrt(3)):
    """A random cluster in the unit cube satisfying both precheck conditions."""
    M = int(rng.integers(2, 40))
    a = float(10 ** rng.uniform(-3.5, -2.5))
    spacing = 1.05 * math.sqrt(M - 1) * a + a
    pts = []
    while len(pts) < M:
        p = rng.uniform(-0.5, 0.5, 3)
        if all(np.linalg.norm(p - q) >= spacing for q in pts):
            pts.append(p)
    pts = np.array(pts)
    from scipy.spatial.distance import pdist

    d = float(pdist(pts).min()) - a
    cfg = ScattererConfiguration(pts, a, d_actual=d, m_max_const=M * a)
    probe = cfg.with_capacitances(CapacitanceMatrix.scalar(1.0, medium.lam, medium.mu, c_acoustic=1.0))
    bound = precheck_invertibility(probe, medium, diam_omega).cond2_bound
    c_a = float(rng.uniform(0.2, 0.9)) * bound
    caps = [synthetic_capacitance(rng, c_a, medium.lam, medium.mu) for _ in range(M)]
    return cfg.with_capacitances(caps)
