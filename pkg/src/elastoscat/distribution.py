"""Cube partitions of the domain and deterministic scatterer placement.

The domain is split into cells of volume ``a^s [K(z)+1] / (K(z)+1)``; cell
``m`` receives ``[K(z_m)+1]`` bodies (``[.]`` is the integer part), so the
number density of bodies is ``(K+1) a^{-s}``.  ``s = 1`` is the dense
regime; ``s < 1`` gives the dilute regime with a vanishing far field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .foldy import ScattererConfiguration

__all__ = [
    "DensityFunction",
    "CubePartition",
    "InfeasibleDistribution",
    "UNIT_CUBE",
    "partition_domain",
    "place_scatterers",
    "layer_census",
    "min_pairwise_distance",
    "config_to_json",
    "config_from_json",
]

UNIT_CUBE = ((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
DEFAULT_D_MIN = 0.45
DEFAULT_A0 = 0.1


class InfeasibleDistribution(ValueError):
    """The requested placement violates a packing bound."""


@dataclass(frozen=True)
class DensityFunction:
    """Local count function ``K >= 0`` with a JSON-serialisable description.

    Supported specs::

        {"type": "constant", "value": k}
        {"type": "affine", "value": k0, "gradient": [gx, gy, gz]}  # k0 + g.z, clipped at 0
    """

    spec: dict
    holder_gamma: float | str = 1.0

    def __post_init__(self):
        kind = self.spec.get("type")
        if kind not in ("constant", "affine"):
            raise ValueError(f"unknown density type {kind!r}")
        if kind == "constant" and float(self.spec["value"]) < 0:
            raise ValueError("K must be non-negative")

    @classmethod
    def constant(cls, k: float) -> "DensityFunction":
        return cls({"type": "constant", "value": float(k)}, 1.0)

    @classmethod
    def affine(cls, k0: float, gradient) -> "DensityFunction":
        return cls({"type": "affine", "value": float(k0), "gradient": [float(g) for g in gradient]}, 1.0)

    @classmethod
    def from_spec(cls, spec: dict) -> "DensityFunction":
        spec = dict(spec)
        gamma = spec.pop("holder_gamma", 1.0)
        return cls(spec, gamma)

    @property
    def is_constant(self) -> bool:
        return self.spec["type"] == "constant"

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.is_constant:
            return np.full(z.shape[:-1], float(self.spec["value"]))
        g = np.asarray(self.spec["gradient"], dtype=float)
        return np.maximum(float(self.spec["value"]) + z @ g, 0.0)

    def k_max(self, omega=UNIT_CUBE) -> float:
        """sup of K + 1 over the box (attained at a corner for the affine type)."""
        lo, hi = np.asarray(omega[0]), np.asarray(omega[1])
        corners = np.array(list(product(*zip(lo, hi))))
        return float(self(corners).max()) + 1.0

    def to_json(self) -> dict:
        return {**self.spec, "holder_gamma": self.holder_gamma}


def _cell_volume(v_unit: float, k: np.ndarray) -> np.ndarray:
    return v_unit * np.floor(k + 1) / (k + 1)


@dataclass(frozen=True)
class CubePartition:
    omega: tuple
    centers: np.ndarray  # (N, 3)
    dims: np.ndarray  # (N, 3) box edge lengths
    k_values: np.ndarray  # K at the cell centre
    targets: np.ndarray  # bodies per cell, [K + 1]
    a: float
    s: float
    density: DensityFunction

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.dims, axis=1)

    @property
    def n_cells(self) -> int:
        return len(self.centers)

    @property
    def total_targets(self) -> int:
        return int(self.targets.sum())

    def uncovered_volume(self) -> float:
        lo, hi = np.asarray(self.omega[0]), np.asarray(self.omega[1])
        return float(np.prod(hi - lo) - self.volumes.sum())


def _balanced(total: int, parts: int) -> list:
    q, r = divmod(total, parts)
    return [q + 1] * r + [q] * (parts - r)


def _constant_partition(lo, hi, v, n_cells):
    """Equal-volume boxes: balanced slabs, then balanced columns, then boxes."""
    ext = hi - lo
    nx = max(1, round(n_cells ** (1 / 3)))
    centers, dims = [], []
    x0 = lo[0]
    for ni in _balanced(n_cells, nx):
        thick = ni * v / (ext[1] * ext[2])
        ny = max(1, round(math.sqrt(ni)))
        y0 = lo[1]
        for nij in _balanced(ni, ny):
            width = ext[1] * nij / ni
            height = ext[2] / nij
            for k in range(nij):
                centers.append((x0 + thick / 2, y0 + width / 2, lo[2] + (k + 0.5) * height))
                dims.append((thick, width, height))
            y0 += width
        x0 += thick
    return np.array(centers), np.array(dims)


def _solve_length(base, length0, vol_of_center, area, limit):
    """Box length ``l`` along the marching axis with ``l * area = vol(center(l))``.

    Fixed-point iteration; at a jump of ``[K+1]`` no fixed point may exist, in
    which case the smaller consistent branch is taken by bisection on the
    residual sign.
    """
    l = length0
    for _ in range(60):
        new = vol_of_center(base + l / 2) / area
        if abs(new - l) <= 1e-15 * max(l, 1e-300):
            return new
        l = new
    lo_l, hi_l = 0.0, limit
    for _ in range(200):
        mid = 0.5 * (lo_l + hi_l)
        if mid * area - vol_of_center(base + mid / 2) < 0:
            lo_l = mid
        else:
            hi_l = mid
    l = hi_l
    return vol_of_center(base + l / 2) / area


def _variable_partition(lo, hi, v_unit, density):
    """Slab / column / box marching with the volume rule enforced per box."""
    centers, dims = [], []
    cube_edge = lambda z: _cell_volume(v_unit, density(np.asarray(z)))[()] ** (1 / 3)
    mid = 0.5 * (lo + hi)
    x0 = lo[0]
    while True:
        tx = cube_edge((x0 + cube_edge((x0, mid[1], mid[2])) / 2, mid[1], mid[2]))
        if x0 + tx > hi[0] + 1e-12:
            break
        xc = x0 + tx / 2
        y0 = lo[1]
        while True:
            ty = cube_edge((xc, y0 + cube_edge((xc, y0, mid[2])) / 2, mid[2]))
            if y0 + ty > hi[1] + 1e-12:
                break
            yc = y0 + ty / 2
            z0 = lo[2]
            area = tx * ty
            while True:
                vol = lambda zc: _cell_volume(v_unit, density(np.array([xc, yc, zc])))[()]
                tz = _solve_length(z0, vol(z0) / area, vol, area, hi[2] - z0 + 1.0)
                if z0 + tz > hi[2] + 1e-12:
                    break
                centers.append((xc, yc, z0 + tz / 2))
                dims.append((tx, ty, tz))
                z0 += tz
            y0 += ty
        x0 += tx
    return np.array(centers).reshape(-1, 3), np.array(dims).reshape(-1, 3)


def partition_domain(
    a: float,
    density: DensityFunction | None = None,
    omega=UNIT_CUBE,
    s: float = 1.0,
    a0: float = DEFAULT_A0,
) -> CubePartition:
    """Split ``omega`` (unit volume) into boxes following the volume rule."""
    density = density or DensityFunction.constant(0.0)
    lo, hi = (np.asarray(c, dtype=float) for c in omega)
    if not abs(np.prod(hi - lo) - 1.0) < 1e-12:
        raise ValueError("the domain must have unit volume")
    if not 0 < a <= a0:
        raise ValueError(f"need 0 < a <= a0 = {a0}, got a = {a}")
    v_unit = a**s
    if density.is_constant:
        k = float(density.spec["value"])
        v = float(_cell_volume(v_unit, np.array(k)))
        n_cells = int(math.floor(1.0 / v * (1 + 1e-12)))
        if n_cells < 1:
            raise ValueError("a is too large: not even one cell fits in the domain")
        centers, dims = _constant_partition(lo, hi, v, n_cells)
    else:
        centers, dims = _variable_partition(lo, hi, v_unit, density)
        if len(centers) == 0:
            raise ValueError("a is too large: not even one cell fits in the domain")
    kv = density(centers)
    targets = np.floor(kv + 1).astype(int)
    return CubePartition(tuple(map(tuple, (lo, hi))), centers, dims, kv, targets, float(a), float(s), density)


def _subgrid(dims, n):
    """Grid (p, q, r) with p*q*r >= n maximising the smallest sub-box edge."""
    best = None
    for p in range(1, n + 1):
        for q in range(1, n + 1):
            if p * q > n and q > 1:
                break
            r = -(-n // (p * q))
            shape = (p, q, r)
            edge = min(d / k for d, k in zip(dims, shape))
            key = (edge, -p * q * r)
            if best is None or key > best[0]:
                best = (key, shape)
    return best[1]


def place_scatterers(
    partition: CubePartition,
    a: float | None = None,
    t: float = 1 / 3,
    seed: int = 0,
    d_min: float = DEFAULT_D_MIN,
    jitter: float = 0.0,
) -> ScattererConfiguration:
    """Place ``[K+1]`` bodies per cell on a sub-lattice.

    Every body sits in its own sub-box and moves at most ``jitter`` times the
    free slack, so each body keeps a distance of at least half the required
    centre spacing ``d_min * a**t + a`` from every sub-box wall.  Bodies in
    distinct sub-boxes are then separated by at least that spacing along
    the axis normal to a separating face, which makes the guarantee
    deterministic.
    """
    a = partition.a if a is None else float(a)
    if not 0 <= jitter <= 1:
        raise ValueError("jitter must lie in [0, 1]")
    required = d_min * a**t + a
    rng = np.random.default_rng(seed)
    positions = []
    owner = []
    for m, (c, dims, n) in enumerate(zip(partition.centers, partition.dims, partition.targets)):
        shape = _subgrid(dims, int(n))
        sub = dims / np.array(shape)
        if sub.min() < required:
            raise InfeasibleDistribution(
                f"packing bound violated: a cell of volume {np.prod(dims):.4g} holding "
                f"[K+1] = {n} bodies allows a centre spacing of {sub.min():.4g}, but "
                f"d_min*a^t + a = {d_min}*{a:.4g}^{t:.4g} + {a:.4g} = {required:.4g} is required; "
                f"the volume count M*(a/2 + d/2)^3 <= |Omega| forces t >= 1/3"
            )
        slack = (sub - required) / 2
        corner = c - dims / 2
        for idx in list(product(*(range(k) for k in shape)))[: int(n)]:
            p = corner + (np.array(idx) + 0.5) * sub
            if jitter > 0:
                p = p + jitter * slack * rng.uniform(-1, 1, 3)
            positions.append(p)
            owner.append(m)
    positions = np.array(positions)
    owner = np.array(owner)
    M = len(positions)
    d_actual = min_pairwise_distance(positions) - a if M > 1 else float("inf")
    if M > 1 and not d_actual > 0:
        raise InfeasibleDistribution(f"bodies of diameter {a} overlap (d_actual = {d_actual})")
    alpha = (t - 0.25) / t if 1 / 3 <= t <= 7 / 12 else float("nan")
    return ScattererConfiguration(
        positions=positions,
        a=a,
        t=float(t),
        s=partition.s,
        d_actual=float(d_actual),
        alpha_dist=alpha,
        m_max_const=M * a**partition.s,
        seed=int(seed),
        d_min=float(d_min),
        cell_size=np.prod(partition.dims, axis=1)[owner] ** (1 / 3),
        density_spec=partition.density.to_json(),
    )


def min_pairwise_distance(points, method: str = "auto") -> float:
    """Minimum Euclidean distance between distinct points.

    ``exhaustive`` scans all pairs, ``tree`` uses a k-d tree; ``auto`` uses
    the exhaustive scan up to 5000 points.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return float("inf")
    if method == "auto":
        method = "exhaustive" if len(points) <= 5000 else "tree"
    if method == "exhaustive":
        return float(pdist(points).min())
    if method == "tree":
        dist, _ = cKDTree(points).query(points, k=2)
        return float(dist[:, 1].min())
    raise ValueError(f"unknown method {method!r}")


def layer_census(config: ScattererConfiguration, m: int, pitch: float | None = None):
    """Count neighbours of body ``m`` per cube layer around it.

    Body ``j`` lies in layer ``n = round(|z_j - z_m|_inf / pitch)``; the
    default pitch is the edge of the cell owning body ``m``.  Returns a list
    of ``(n, count, min_distance)`` sorted by ``n``.
    """
    z = config.positions
    if not 0 <= m < len(z):
        raise IndexError(f"body index {m} out of range")
    if pitch is None:
        pitch = float(config.cell_size[m]) if config.cell_size is not None else config.a ** (1 / 3)
    d = z - z[m]
    cheb = np.abs(d).max(axis=1)
    eu = np.linalg.norm(d, axis=1)
    layer = np.rint(cheb / pitch).astype(int)
    mask = np.arange(len(z)) != m
    out = []
    for n in np.unique(layer[mask]):
        sel = mask & (layer == n)
        out.append((int(n), int(sel.sum()), float(eu[sel].min())))
    return out


def config_to_json(config: ScattererConfiguration) -> str:
    rec = {
        "a": config.a,
        "t": config.t,
        "s": config.s,
        "seed": config.seed,
        "d_min": config.d_min,
        "positions": config.positions.tolist(),
        "d_actual": config.d_actual,
        "alpha_dist": config.alpha_dist,
        "m_max_const": config.m_max_const,
        "K": config.density_spec,
    }
    if config.cell_size is not None:
        rec["cell_size"] = config.cell_size.tolist()
    return json.dumps(rec, allow_nan=True)


def config_from_json(text: str) -> ScattererConfiguration:
    rec = json.loads(text)
    return ScattererConfiguration(
        positions=np.array(rec["positions"], dtype=float),
        a=rec["a"],
        t=rec["t"],
        s=rec.get("s", 1.0),
        d_actual=rec["d_actual"],
        alpha_dist=rec.get("alpha_dist", float("nan")),
        m_max_const=rec.get("m_max_const", float("nan")),
        seed=rec.get("seed", 0),
        d_min=rec.get("d_min", DEFAULT_D_MIN),
        cell_size=np.array(rec["cell_size"]) if "cell_size" in rec else None,
        density_spec=rec.get("K"),
    )
