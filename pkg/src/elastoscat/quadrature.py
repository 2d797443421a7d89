"""Triangle quadrature for the 1/r and r r^T/r^3 layer kernels.

All routines are vectorised over batches of (target point, source triangle)
pairs and return the two integrals

    s = int_T 1 / (4 pi |x - y|) dy,
    t = int_T (x - y)(x - y)^T / (4 pi |x - y|^3) dy,

with ``t`` packed as the six unique entries (xx, yy, zz, xy, xz, yz).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

__all__ = [
    "PACKED",
    "unpack",
    "point_kernels",
    "centroid_rule",
    "dunavant_rule",
    "near_rule",
    "self_rule",
    "graded_duffy_rule",
    "centroid_block",
]

# index pairs of the packed symmetric 3x3 storage
PACKED = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
_FOUR_PI = 4 * np.pi
# pairs closer than this many source edge lengths use the graded polar rule
CLOSE_RATIO = 1.2
# beyond this many edge lengths a one-point rule is used
NEAR_RATIO = 4.0


def unpack(t: np.ndarray) -> np.ndarray:
    """(..., 6) packed symmetric entries to (..., 3, 3)."""
    out = np.empty(t.shape[:-1] + (3, 3), dtype=t.dtype)
    for c, (i, j) in enumerate(PACKED):
        out[..., i, j] = t[..., c]
        out[..., j, i] = t[..., c]
    return out


def point_kernels(d: np.ndarray, w: np.ndarray | float = 1.0):
    """Kernel values at separations ``d`` (..., 3), multiplied by weights ``w``."""
    r2 = np.einsum("...k,...k->...", d, d)
    r = np.sqrt(r2)
    s = w / (_FOUR_PI * r)
    g = s / r2
    t = np.stack([g * d[..., i] * d[..., j] for i, j in PACKED], axis=-1)
    return s, t


def centroid_rule(x, corners, areas):
    """One-point rule at the source centroid."""
    d = x - corners.mean(axis=1)
    return point_kernels(d, areas)


# symmetric 7-point rule exact for degree 5
_A1 = (6 - np.sqrt(15)) / 21
_A2 = (6 + np.sqrt(15)) / 21
_W1 = (155 - np.sqrt(15)) / 1200
_W2 = (155 + np.sqrt(15)) / 1200
_DUNAVANT_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _A1, 1 - 2 * _A1],
        [_A1, 1 - 2 * _A1, _A1],
        [1 - 2 * _A1, _A1, _A1],
        [_A2, _A2, 1 - 2 * _A2],
        [_A2, 1 - 2 * _A2, _A2],
        [1 - 2 * _A2, _A2, _A2],
    ]
)
_DUNAVANT_W = np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])


def _subdivision_bary(levels: int) -> np.ndarray:
    """Barycentric corners of the 4**levels congruent subtriangles."""
    tris = np.array([np.eye(3)])
    for _ in range(levels):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        tris = np.concatenate(
            [
                np.stack([a, ab, ca], 1),
                np.stack([ab, b, bc], 1),
                np.stack([ca, bc, c], 1),
                np.stack([ab, bc, ca], 1),
            ]
        )
    return tris


def _composite_bary(levels: int):
    sub = _subdivision_bary(levels)
    pts = np.einsum("qk,skl->sql", _DUNAVANT_BARY, sub).reshape(-1, 3)
    w = np.tile(_DUNAVANT_W, len(sub)) / len(sub)
    return pts, w


_COMPOSITE = {lv: _composite_bary(lv) for lv in range(4)}


def _apply_rule(x, pts, wts):
    out = np.zeros((len(x), 7))
    _accumulate(x, pts, wts, out)
    return out[:, 0], out[:, 1:]


@njit(cache=True, parallel=True)
def _accumulate(x, pts, wts, out):
    # out[n] += sum_q wts[n, q] * (1/(4 pi r), d d^T/(4 pi r^3)) at d = x[n] - pts[n, q]
    for n in prange(x.shape[0]):
        acc = np.zeros(7)
        for q in range(pts.shape[1]):
            d0 = x[n, 0] - pts[n, q, 0]
            d1 = x[n, 1] - pts[n, q, 1]
            d2 = x[n, 2] - pts[n, q, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            s = wts[n, q] / (_FOUR_PI * np.sqrt(r2))
            g = s / r2
            acc[0] += s
            acc[1] += g * d0 * d0
            acc[2] += g * d1 * d1
            acc[3] += g * d2 * d2
            acc[4] += g * d0 * d1
            acc[5] += g * d0 * d2
            acc[6] += g * d1 * d2
        for c in range(7):
            out[n, c] += acc[c]


def dunavant_rule(x, corners, areas, levels: int = 1):
    """Degree-5 rule on ``4**levels`` subtriangles of each source triangle."""
    bary, w = _COMPOSITE[levels]
    y = np.matmul(bary[None], corners)
    return _apply_rule(x, y, areas[:, None] * w)


def _gauss(n: int, a: float = 0.0, b: float = 1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _graded_nodes(n_per: int, ratio: float, n_intervals: int):
    """Gauss nodes on [0, 1] refined geometrically towards 0."""
    edges = [0.0] + [ratio**k for k in range(n_intervals - 1, 0, -1)] + [1.0]
    xs, ws = zip(*(_gauss(n_per, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])))
    return np.concatenate(xs), np.concatenate(ws)


_U_NODES = _graded_nodes(5, 0.15, 5)
_T_NODES = _graded_nodes(5, 0.15, 3)
_SELF_V = _gauss(32)


@njit(cache=True, parallel=True)
def _graded_kernel(x, corners, u, wu, t, wt, out):
    for n in prange(x.shape[0]):
        v0 = corners[n, 0]
        e1 = corners[n, 1] - v0
        e2 = corners[n, 2] - v0
        nrm = np.cross(e1, e2)
        nrm = nrm / np.sqrt(nrm @ nrm)
        xn = x[n]
        height = (xn - v0) @ nrm
        foot = xn - height * nrm
        acc = np.zeros(7)
        for k in range(3):
            a = corners[n, k]
            b = corners[n, (k + 1) % 3]
            pa = a - foot
            ab = b - a
            sub2 = np.cross(pa, b - foot) @ nrm
            vstar = min(max(-(pa @ ab) / (ab @ ab), 0.0), 1.0)
            for side in range(2):
                if side == 0:
                    length = vstar
                else:
                    length = 1.0 - vstar
                if length == 0.0:
                    continue
                for iv in range(t.shape[0]):
                    if side == 0:
                        v = vstar * (1.0 - t[iv])
                    else:
                        v = vstar + length * t[iv]
                    wv = length * wt[iv]
                    w0 = pa[0] + v * ab[0]
                    w1 = pa[1] + v * ab[1]
                    w2 = pa[2] + v * ab[2]
                    for iu in range(u.shape[0]):
                        uu = u[iu]
                        d0 = xn[0] - (foot[0] + uu * w0)
                        d1 = xn[1] - (foot[1] + uu * w1)
                        d2 = xn[2] - (foot[2] + uu * w2)
                        r2 = d0 * d0 + d1 * d1 + d2 * d2
                        s = sub2 * uu * wu[iu] * wv / (_FOUR_PI * np.sqrt(r2))
                        g = s / r2
                        acc[0] += s
                        acc[1] += g * d0 * d0
                        acc[2] += g * d1 * d1
                        acc[3] += g * d2 * d2
                        acc[4] += g * d0 * d1
                        acc[5] += g * d0 * d2
                        acc[6] += g * d1 * d2
        for c in range(7):
            out[n, c] = acc[c]


def graded_duffy_rule(x, corners):
    """Integrate over each source triangle by polar splitting at the projection of ``x``.

    The triangle is split into three signed subtriangles sharing the foot
    point of ``x`` on the triangle plane.  On each, the collapsed coordinate
    map puts the Jacobian zero at the foot point; Gauss rules graded towards
    the foot point (radially) and towards the closest point of the edge line
    (angularly) resolve the near-singular layers.  Handles targets inside,
    near or on the source triangle.
    """
    x = np.ascontiguousarray(x, dtype=float)
    corners = np.ascontiguousarray(corners, dtype=float)
    out = np.empty((len(x), 7))
    _graded_kernel(x, corners, *_U_NODES, *_T_NODES, out)
    return out[:, 0], out[:, 1:]


@njit(cache=True, parallel=True)
def centroid_block(cen, lo, hi, S, T):
    """Fill rows lo:hi of the one-point-rule layer matrices (diagonal left as 0)."""
    n = cen.shape[0]
    for i in prange(lo, hi):
        for j in range(n):
            if i == j:
                S[i - lo, j] = 0.0
                for c in range(6):
                    T[c, i - lo, j] = 0.0
                continue
            d0 = cen[i, 0] - cen[j, 0]
            d1 = cen[i, 1] - cen[j, 1]
            d2 = cen[i, 2] - cen[j, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            s = 1.0 / (_FOUR_PI * np.sqrt(r2))
            g = s / r2
            S[i - lo, j] = s
            T[0, i - lo, j] = g * d0 * d0
            T[1, i - lo, j] = g * d1 * d1
            T[2, i - lo, j] = g * d2 * d2
            T[3, i - lo, j] = g * d0 * d1
            T[4, i - lo, j] = g * d0 * d2
            T[5, i - lo, j] = g * d1 * d2


def self_rule(corners):
    """Integrals over a flat triangle with the target at its centroid.

    The triangle is split into three subtriangles at the centroid.  In
    collapsed coordinates both kernels are independent of the radial
    variable, leaving a one-dimensional edge integral: closed form for
    1/r, Gauss-Legendre for r r^T / r^3.
    """
    p = corners.mean(axis=1)
    v, wv = _SELF_V
    s_tot = np.zeros(len(corners))
    t_tot = np.zeros((len(corners), 6))
    for k in range(3):
        a = corners[:, k]
        b = corners[:, (k + 1) % 3]
        pa, ab = a - p, b - a
        area2 = np.linalg.norm(np.cross(pa, b - p), axis=1)
        # closed form of int_0^1 dv / |pa + v ab|
        L = np.linalg.norm(ab, axis=1)
        e = ab / L[:, None]
        sa = np.einsum("nk,nk->n", pa, e)
        hperp = np.linalg.norm(pa - sa[:, None] * e, axis=1)
        sb = sa + L
        line = (np.arcsinh(sb / hperp) - np.arcsinh(sa / hperp)) / L
        s_tot += area2 * line / (4 * np.pi)
        w = pa[:, None, :] + v[None, :, None] * ab[:, None, :]
        r = np.linalg.norm(w, axis=2)
        g = area2[:, None] * wv[None, :] / (4 * np.pi * r**3)
        t_tot += np.stack(
            [np.sum(g * w[..., i] * w[..., j], axis=1) for i, j in PACKED], axis=1
        )
    return s_tot, t_tot


def near_rule(x, corners, areas, dist_ratio, coarse: bool = False):
    """Dispatch on ``dist_ratio = |x - centroid| / longest edge``.

    With ``coarse`` every tier drops to the next cheaper rule; the
    difference to the default is used as a quadrature error indicator.
    """
    s = np.empty(len(x))
    t = np.empty((len(x), 6))
    close = dist_ratio < CLOSE_RATIO
    mid = (~close) & (dist_ratio < 2.5)
    far = ~(close | mid)
    if coarse:
        rules = (
            lambda sel: dunavant_rule(x[sel], corners[sel], areas[sel], 2),
            lambda sel: dunavant_rule(x[sel], corners[sel], areas[sel], 1),
            lambda sel: dunavant_rule(x[sel], corners[sel], areas[sel], 0),
        )
    else:
        rules = (
            lambda sel: graded_duffy_rule(x[sel], corners[sel]),
            lambda sel: dunavant_rule(x[sel], corners[sel], areas[sel], 2),
            lambda sel: dunavant_rule(x[sel], corners[sel], areas[sel], 1),
        )
    for mask, fn in zip((close, mid, far), rules):
        if np.any(mask):
            idx = np.nonzero(mask)[0]
            for lo in range(0, len(idx), 20000):
                sel = idx[lo : lo + 20000]
                s[sel], t[sel] = fn(sel)
    return s, t
