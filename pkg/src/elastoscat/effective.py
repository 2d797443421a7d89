"""Equivalent-medium computations on a voxel grid.

The volume equation

    Y(z) + int_Omega Gamma^omega(z, y) q(y) Y(y) dy = -U^i(z)

is discretised by collocation at voxel centres: the off-diagonal
interactions use the midpoint rule, the self-voxel integral of the Kelvin
part is evaluated in closed form and the smooth dynamic remainder at the
origin is added with weight ``h^3``.  The discrete operator is a block
Toeplitz matrix and is applied through a circulant embedding with FFTs.

A variable background density ``rho`` enters through the potential as
``q + omega^2 (1 - rho) I``, so that ``q = (K+1) C0`` together with
``rho = 1 + (K+1) c / omega^2`` cancels exactly.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla

from .foldy import FarFieldPattern, farfield_from_sources
from .krylov import gmres
from .medium import ElasticMedium, IncidentPlaneWave, dynamic_remainder_at_origin, kupradze_coefficients, kupradze_tensor

__all__ = [
    "VoxelGrid",
    "PotentialField",
    "VolumeField",
    "LSOperator",
    "effective_density",
    "solve_lippmann_schwinger",
    "ls_farfield",
    "ls_dense_matrix",
    "reference_farfield",
    "cube_inverse_distance",
    "DENSE_GRID_LIMIT",
]

DENSE_GRID_LIMIT = 12


def _rect_inverse_distance(a: float, b: float, z: float) -> float:
    # int over [0,a]x[0,b] of 1/sqrt(x^2 + y^2 + z^2)
    d = math.sqrt(a * a + b * b + z * z)
    return (
        a * math.log((b + d) / math.hypot(a, z))
        + b * math.log((a + d) / math.hypot(b, z))
        - z * math.atan(a * b / (z * d))
    )


def cube_inverse_distance() -> float:
    """Integral of ``1/|y|`` over the unit cube centred at the origin.

    Uses ``div(y/|y|) = 2/|y|``: the volume integral is half the flux of
    ``y/|y|`` through the six faces.
    """
    return 0.5 * 6 * 0.5 * 4 * _rect_inverse_distance(0.5, 0.5, 0.5)


@dataclass(frozen=True)
class VoxelGrid:
    """``n^3`` cubic voxels filling an axis-aligned cube, C-ordered (ix, iy, iz)."""

    n: int
    lo: tuple = (-0.5, -0.5, -0.5)
    edge: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid resolution must be positive")

    @property
    def h(self) -> float:
        return self.edge / self.n

    @property
    def size(self) -> int:
        return self.n**3

    @property
    def centers(self) -> np.ndarray:
        c = np.asarray(self.lo)[:, None] + (np.arange(self.n) + 0.5)[None, :] * self.h
        g = np.meshgrid(c[0], c[1], c[2], indexing="ij")
        return np.stack([x.ravel() for x in g], axis=1)

    def indices(self) -> np.ndarray:
        g = np.meshgrid(*(np.arange(self.n),) * 3, indexing="ij")
        return np.stack([x.ravel() for x in g], axis=1)

    def locate(self, points) -> np.ndarray:
        """Flat index of the voxel containing each point."""
        ijk = np.floor((np.asarray(points) - np.asarray(self.lo)) / self.h).astype(int)
        ijk = np.clip(ijk, 0, self.n - 1)
        return np.ravel_multi_index(ijk.T, (self.n,) * 3)


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Per-voxel 3x3 potential ``q`` and (informational) background density."""

    grid: VoxelGrid
    q: np.ndarray  # (n^3, 3, 3)
    rho: np.ndarray | None = None

    def __post_init__(self):
        q = np.asarray(self.q)
        if q.shape != (self.grid.size, 3, 3):
            raise ValueError(f"potential must have shape {(self.grid.size, 3, 3)}")
        if not np.all(np.isfinite(q)):
            raise ValueError("potential must be bounded")
        object.__setattr__(self, "q", q)

    @classmethod
    def zero(cls, grid: VoxelGrid) -> "PotentialField":
        return cls(grid, np.zeros((grid.size, 3, 3)))

    @classmethod
    def constant(cls, grid: VoxelGrid, matrix) -> "PotentialField":
        m = float(matrix) * np.eye(3) if np.ndim(matrix) == 0 else np.asarray(matrix)
        return cls(grid, np.broadcast_to(m, (grid.size, 3, 3)).copy())

    @classmethod
    def perforation(cls, grid: VoxelGrid, density, c0) -> "PotentialField":
        """Limit potential ``(K + 1) C0`` with ``K`` sampled at voxel centres."""
        k1 = density(grid.centers) + 1.0
        return cls(grid, k1[:, None, None] * np.asarray(c0)[None])

    @classmethod
    def staircase(cls, grid: VoxelGrid, partition, c0) -> "PotentialField":
        """``K_a = [K(z_m)+1]`` on each cell, zero on uncovered voxels."""
        z = grid.centers
        vals = np.zeros(grid.size)
        lo = partition.centers - partition.dims / 2
        hi = partition.centers + partition.dims / 2
        for l, u, k in zip(lo, hi, partition.targets / partition.volumes * partition.a**partition.s):
            inside = np.all((z >= l) & (z < u), axis=1)
            vals[inside] = k
        return cls(grid, vals[:, None, None] * np.asarray(c0)[None])

    def with_background(self, rho, omega: float) -> "PotentialField":
        """Add the density contrast ``omega^2 (1 - rho) I``; ``rho`` scalar, array or callable."""
        if callable(rho):
            rho = rho(self.grid.centers)
        rho = np.broadcast_to(np.asarray(rho, dtype=float), (self.grid.size,)).copy()
        q = self.q + (omega**2 * (1.0 - rho))[:, None, None] * np.eye(3)
        return PotentialField(self.grid, q, rho)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.q)


@dataclass(frozen=True, eq=False)
class VolumeField:
    grid: VoxelGrid
    values: np.ndarray  # (n^3, 3) complex
    residual_norm: float = 0.0
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)

    def write_csv(self, path) -> None:
        tmp = f"{path}.{os.getpid()}.tmp"
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ix", "iy", "iz"] + [f"Re(u{i})" for i in (1, 2, 3)] + [f"Im(u{i})" for i in (1, 2, 3)])
            for ijk, u in zip(self.grid.indices(), self.values):
                w.writerow(list(map(int, ijk)) + [f"{v:.17g}" for v in (*u.real, *u.imag)])
        os.replace(tmp, path)


def self_voxel_integral(medium: ElasticMedium, h: float, rule: str = "cube") -> np.ndarray:
    """Integral of ``Gamma^omega(0, y)`` over a voxel of edge ``h`` centred at 0.

    ``rule='cube'`` integrates the Kelvin part over the voxel exactly,
    ``rule='ball'`` over the ball of equal volume.  The dynamic remainder is
    added as ``h^3`` times its value at the origin.
    """
    a_coef = 1 / medium.mu + 1 / (medium.lam + 2 * medium.mu)
    b_coef = 1 / medium.mu - 1 / (medium.lam + 2 * medium.mu)
    if rule == "cube":
        inv_dist = cube_inverse_distance() * h**2
    elif rule == "ball":
        radius = (3 / (4 * math.pi)) ** (1 / 3) * h
        inv_dist = 2 * math.pi * radius**2
    else:
        raise ValueError(f"unknown self-voxel rule {rule!r}")
    # isotropy: the r r^T / r^3 term averages to I/3 of the 1/r integral
    kelvin = (a_coef + b_coef / 3) * inv_dist / (8 * math.pi) * np.eye(3)
    return kelvin + h**3 * dynamic_remainder_at_origin(medium)


_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


class LSOperator:
    """``Y -> Y + A(qY)`` with the block Toeplitz matrix ``A`` applied by FFT."""

    def __init__(self, medium: ElasticMedium, grid: VoxelGrid, self_rule: str = "cube"):
        self.medium = medium
        self.grid = grid
        self.self_rule = self_rule
        n = grid.n
        m = 2 * n
        k = np.arange(m)
        off = np.where(k < n, k, k - m).astype(float) * grid.h
        off[n] = 0.0  # unused wrap-around slot
        dx, dy, dz = np.meshgrid(off, off, off, indexing="ij")
        r = np.sqrt(dx * dx + dy * dy + dz * dz)
        r[r == 0] = 1.0  # origin and unused wrap-around slots
        alpha, beta = kupradze_coefficients(medium, r)
        e = (dx / r, dy / r, dz / r)
        selfint = self_voxel_integral(medium, grid.h, self_rule)
        hat = np.empty((6, m, m, m), dtype=complex)
        for c, (i, j) in enumerate(_PAIRS):
            g = beta * e[i] * e[j] + (alpha if i == j else 0.0)
            g *= grid.h**3
            g[0, 0, 0] = selfint[i, j]
            g[n, :, :] = 0
            g[:, n, :] = 0
            g[:, :, n] = 0
            hat[c] = sfft.fftn(g, workers=-1)
        self._hat = hat
        self._selfint = selfint

    def convolve(self, w: np.ndarray) -> np.ndarray:
        """Apply the interaction matrix to per-voxel source vectors ``w`` (n^3, 3)."""
        n = self.grid.n
        m = 2 * n
        buf = np.zeros((3, m, m, m), dtype=complex)
        buf[:, :n, :n, :n] = w.T.reshape(3, n, n, n)
        wh = sfft.fftn(buf, axes=(1, 2, 3), workers=-1, overwrite_x=True)
        h = self._hat
        out = np.empty_like(wh)
        out[0] = h[0] * wh[0] + h[3] * wh[1] + h[4] * wh[2]
        out[1] = h[3] * wh[0] + h[1] * wh[1] + h[5] * wh[2]
        out[2] = h[4] * wh[0] + h[5] * wh[1] + h[2] * wh[2]
        del wh
        res = sfft.ifftn(out, axes=(1, 2, 3), workers=-1, overwrite_x=True)
        return res[:, :n, :n, :n].reshape(3, -1).T

    def apply(self, potential: PotentialField, y: np.ndarray) -> np.ndarray:
        w = np.einsum("nij,nj->ni", potential.q, y)
        return y + self.convolve(w)


_OPERATORS: dict = {}


def _operator(medium, grid, self_rule) -> LSOperator:
    key = (medium, grid, self_rule)
    if key not in _OPERATORS:
        _OPERATORS.clear()  # kernels are large; keep only the latest
        _OPERATORS[key] = LSOperator(medium, grid, self_rule)
    return _OPERATORS[key]


def effective_density(rho, k_plus_1, c0, omega: float) -> np.ndarray:
    """``rho I - (K+1) C0 / omega^2``, pointwise when ``rho``/``k_plus_1`` are arrays."""
    if not omega > 0:
        raise ValueError("effective density needs omega > 0")
    rho = np.asarray(rho, dtype=float)
    k1 = np.asarray(k_plus_1, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    shape = np.broadcast_shapes(rho.shape, k1.shape)
    rho = np.broadcast_to(rho, shape)[..., None, None]
    k1 = np.broadcast_to(k1, shape)[..., None, None]
    return rho * np.eye(3) - k1 * c0 / omega**2


def ls_dense_matrix(medium: ElasticMedium, potential: PotentialField, self_rule: str = "cube") -> np.ndarray:
    """Dense ``3n^3`` system matrix, the oracle for small grids."""
    grid = potential.grid
    if grid.n > DENSE_GRID_LIMIT:
        raise ValueError(f"dense assembly is limited to n <= {DENSE_GRID_LIMIT}")
    z = grid.centers
    N = grid.size
    G = np.zeros((N, N, 3, 3), dtype=complex)
    i, j = np.nonzero(~np.eye(N, dtype=bool))
    G[i, j] = kupradze_tensor(medium, z[i], z[j]) * grid.h**3
    G[np.arange(N), np.arange(N)] = self_voxel_integral(medium, grid.h, self_rule)
    A = np.einsum("mnij,njk->mink", G, potential.q).reshape(3 * N, 3 * N)
    return np.eye(3 * N) + A


def solve_lippmann_schwinger(
    medium: ElasticMedium,
    potential: PotentialField,
    wave,
    *,
    method: str = "iterative",
    rtol: float = 1e-10,
    maxiter: int | None = None,
    x0=None,
    self_rule: str = "cube",
):
    """Solve the discrete volume equation; ``wave`` may be a list of waves."""
    grid = potential.grid
    if grid.n < 4 and method != "dense":
        raise ValueError("grid resolution must be at least 4")
    waves = list(wave) if isinstance(wave, (list, tuple)) else [wave]
    z = grid.centers
    rhs = np.stack([-w.field(medium, z).ravel() for w in waves], axis=1)
    N = grid.size
    iters = 0
    history: list = []
    if potential.is_zero:
        Y = rhs.copy()
    elif method == "dense":
        Y = sla.solve(ls_dense_matrix(medium, potential, self_rule), rhs)
    elif method == "iterative":
        op = _operator(medium, grid, self_rule)

        def matvec(X):
            return np.stack([op.apply(potential, X[:, c].reshape(N, 3)).ravel() for c in range(X.shape[1])], axis=1)

        if maxiter is None:
            maxiter = 400
        X0 = None if x0 is None else np.asarray(x0, dtype=complex).reshape(3 * N, -1)
        Y, info = gmres(matvec, rhs.astype(complex), x0=X0, rtol=0.1 * rtol, maxiter=maxiter)
        iters = info.iterations
        history = info.history
    else:
        raise ValueError(f"unknown method {method!r}")
    if potential.is_zero:
        res = 0.0
    elif method == "dense":
        A = ls_dense_matrix(medium, potential, self_rule)
        res = float(np.max(np.linalg.norm(A @ Y - rhs, axis=0) / np.linalg.norm(rhs, axis=0)))
    else:
        r = matvec(Y) - rhs
        res = float(np.max(np.linalg.norm(r, axis=0) / np.linalg.norm(rhs, axis=0)))
    if res > rtol:
        raise RuntimeError(f"volume solve residual {res:.3e} exceeds {rtol:.1e}")
    fields = [VolumeField(grid, Y[:, c].reshape(N, 3), res, iters, history) for c in range(Y.shape[1])]
    return fields if isinstance(wave, (list, tuple)) else fields[0]


def ls_farfield(medium: ElasticMedium, potential: PotentialField, field: VolumeField, directions, wave=None) -> FarFieldPattern:
    """Far field of the volume sources ``h^3 q Y`` (same rule as the assembly)."""
    if field.grid != potential.grid:
        raise ValueError("the field and the potential live on different grids")
    grid = potential.grid
    sources = grid.h**3 * np.einsum("nij,nj->ni", potential.q, field.values)
    keep = np.any(sources != 0, axis=1)
    return farfield_from_sources(medium, grid.centers[keep], sources[keep], directions, wave)


def reference_farfield(
    medium: ElasticMedium,
    make_potential,
    wave: IncidentPlaneWave,
    directions,
    levels=(16, 32, 64),
    self_rule: str = "cube",
):
    """Richardson-extrapolated far field from three grid levels.

    ``make_potential(grid)`` builds the potential on a grid.  Returns the
    extrapolated pattern, the observed order and the finest-level pattern.
    """
    pats = []
    for n in levels:
        grid = VoxelGrid(n)
        pot = make_potential(grid)
        y = solve_lippmann_schwinger(medium, pot, wave, self_rule=self_rule)
        pats.append(ls_farfield(medium, pot, y, directions, wave))
    stack = [np.concatenate([p.p_part.ravel(), p.s_part.ravel()]) for p in pats]
    stack = [np.concatenate([v.real, v.imag]) for v in stack]
    limit, order = _richardson(stack, [1 / n for n in levels])
    half = len(limit) // 2
    vec = limit[:half] + 1j * limit[half:]
    nd = len(pats[-1].directions)
    p = vec[: 3 * nd].reshape(nd, 3)
    s = vec[3 * nd :].reshape(nd, 3)
    x = pats[-1].directions
    # re-project to remove the rounding of the extrapolation
    xx = x[:, :, None] * x[:, None, :]
    p = np.einsum("nij,nj->ni", xx, p)
    s = np.einsum("nij,nj->ni", np.eye(3) - xx, s)
    return FarFieldPattern(x, p, s, medium, wave), order, pats[-1]


def _richardson(values, hs):
    from .capacitance import richardson

    return richardson(values, hs)
