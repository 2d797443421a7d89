"""Compiled point-to-point Kupradze interactions for matrix-free solvers.

``apply_kupradze`` evaluates ``out_i = sum_j Gamma(x_i, y_j) q_j`` without
storing the kernel.  It reimplements the radial coefficients of
:mod:`elastoscat.medium` (closed form, small-argument series and the static
branch) in scalar form so that numba can fuse the pair loop.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .medium import SERIES_SWITCH, ElasticMedium, _series_coefficients

__all__ = ["KernelParams", "kernel_params", "apply_kupradze"]

_FOUR_PI = 4 * math.pi


class KernelParams:
    """Scalars and series coefficients passed to the compiled kernel."""

    def __init__(self, medium: ElasticMedium):
        self.ks = medium.kappa_s
        self.kp = medium.kappa_p
        self.mu = medium.mu
        self.w2 = medium.omega**2
        self.static_a = (1 / medium.mu + 1 / (medium.lam + 2 * medium.mu)) / (8 * math.pi)
        self.static_b = (1 / medium.mu - 1 / (medium.lam + 2 * medium.mu)) / (8 * math.pi)
        if medium.omega > 0:
            l, c = _series_coefficients(medium)
            self.c_h1r = np.ascontiguousarray(c * (l - 1))
            self.c_f = np.ascontiguousarray(c * (l - 1) * (l - 3))
        else:
            self.c_h1r = np.zeros(1, dtype=complex)
            self.c_f = np.zeros(1, dtype=complex)

    def tuple(self):
        return (self.ks, self.kp, self.mu, self.w2, self.static_a, self.static_b, self.c_h1r, self.c_f)


def kernel_params(medium: ElasticMedium) -> KernelParams:
    return KernelParams(medium)


@njit(cache=True, inline="always")
def _radial(r, ks, kp, mu, w2, sa, sb, c_h1r, c_f):
    if w2 == 0.0:
        return sa / r + 0j, sb / r + 0j
    es = np.exp(1j * ks * r) / _FOUR_PI
    p0 = es / r
    if ks * r >= SERIES_SWITCH:
        ep = np.exp(1j * kp * r) / _FOUR_PI
        kr = ks * r
        s1 = es * (1j * kr - 1) / (r * r)
        s2 = es * (2 - 2j * kr - kr * kr) / (r * r * r)
        kr = kp * r
        p1 = ep * (1j * kr - 1) / (r * r)
        p2 = ep * (2 - 2j * kr - kr * kr) / (r * r * r)
        d1 = s1 - p1
        d2 = s2 - p2
        h1r = d1 / r / w2
        f = (d2 - d1 / r) / w2
    else:
        # powers r**(l-3), l = 2, 3, ...
        h1r = 0j
        f = 0j
        pw = 1.0 / r
        for k in range(c_h1r.shape[0]):
            h1r += c_h1r[k] * pw
            f += c_f[k] * pw
            pw *= r
    return p0 / mu + h1r, f


@njit(cache=True, parallel=True)
def _apply(targets, sources, q, same, ks, kp, mu, w2, sa, sb, c_h1r, c_f, near_r, near_val, out):
    nt = targets.shape[0]
    ns = sources.shape[0]
    for i in prange(nt):
        o0 = 0j
        o1 = 0j
        o2 = 0j
        for j in range(ns):
            if same and i == j:
                continue
            d0 = targets[i, 0] - sources[j, 0]
            d1 = targets[i, 1] - sources[j, 1]
            d2 = targets[i, 2] - sources[j, 2]
            r = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            q0 = q[j, 0]
            q1 = q[j, 1]
            q2 = q[j, 2]
            if r < near_r:
                o0 += near_val[0, 0] * q0 + near_val[0, 1] * q1 + near_val[0, 2] * q2
                o1 += near_val[1, 0] * q0 + near_val[1, 1] * q1 + near_val[1, 2] * q2
                o2 += near_val[2, 0] * q0 + near_val[2, 1] * q1 + near_val[2, 2] * q2
                continue
            alpha, beta = _radial(r, ks, kp, mu, w2, sa, sb, c_h1r, c_f)
            e0 = d0 / r
            e1 = d1 / r
            e2 = d2 / r
            proj = beta * (e0 * q0 + e1 * q1 + e2 * q2)
            o0 += alpha * q0 + proj * e0
            o1 += alpha * q1 + proj * e1
            o2 += alpha * q2 + proj * e2
        out[i, 0] = o0
        out[i, 1] = o1
        out[i, 2] = o2


def apply_kupradze(
    params: KernelParams,
    targets,
    sources,
    q,
    *,
    same: bool = False,
    near_radius: float = 0.0,
    near_value=None,
):
    """Return ``sum_j Gamma(targets_i, sources_j) q_j`` as a (Nt, 3) complex array.

    With ``same`` the diagonal ``i == j`` is skipped.  Pairs closer than
    ``near_radius`` use the constant 3x3 ``near_value`` instead of the kernel
    (a cell-averaged kernel for coincident body/voxel pairs).
    """
    targets = np.ascontiguousarray(targets, dtype=float)
    sources = np.ascontiguousarray(sources, dtype=float)
    q = np.ascontiguousarray(q, dtype=complex).reshape(len(sources), 3)
    nv = np.zeros((3, 3), dtype=complex) if near_value is None else np.ascontiguousarray(near_value, dtype=complex)
    out = np.empty((len(targets), 3), dtype=complex)
    _apply(targets, sources, q, same, *params.tuple(), float(near_radius), nv, out)
    return out
