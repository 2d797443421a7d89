"""Foldy-Lax point-interaction system for many small rigid bodies.

The amplitudes ``Q_m`` solve

    C_m^{-1} Q_m + sum_{j != m} Gamma^omega(z_m, z_j) Q_j = -U^i(z_m),

with ``C_m = Cbar_m * a``.  Internally the equivalent scaled system
``Q_m + C_m sum_j Gamma Q_j = -C_m U^i(z_m)`` is solved; the residual
reported is always that of the unscaled system above.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .capacitance import CapacitanceMatrix
from .kernels import apply_kupradze, kernel_params
from .krylov import gmres
from .medium import ElasticMedium, IncidentPlaneWave, green_bound_constants, kupradze_coefficients

__all__ = [
    "ScattererConfiguration",
    "ScatteringAmplitudes",
    "FarFieldPattern",
    "PrecheckReport",
    "precheck_invertibility",
    "amplitude_norm_bound",
    "foldy_matrix",
    "solve_foldy",
    "foldy_farfield",
    "farfield_from_sources",
    "cube_directions",
    "write_farfield_csv",
    "read_farfield_csv",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 6000  # unknowns


@dataclass(frozen=True, eq=False)
class ScattererConfiguration:
    """Body centres, common diameter and per-body capacitances.

    ``capacitances`` holds distinct capacitance records and ``cap_index``
    assigns one to each body; a single record is shared by all bodies.
    """

    positions: np.ndarray
    a: float
    t: float = 1 / 3
    s: float = 1.0
    d_actual: float = float("nan")
    alpha_dist: float = float("nan")
    m_max_const: float = float("nan")
    seed: int = 0
    d_min: float = float("nan")
    cell_size: np.ndarray | None = None
    density_spec: dict | None = None
    capacitances: tuple = ()
    cap_index: np.ndarray | None = None

    def __post_init__(self):
        z = np.array(self.positions, dtype=float).reshape(-1, 3)
        if len(z) < 1:
            raise ValueError("a configuration needs at least one body")
        if not self.a > 0:
            raise ValueError("diameter a must be positive")
        z.setflags(write=False)
        object.__setattr__(self, "positions", z)
        if len(z) > 1:
            from scipy.spatial import cKDTree

            dist, _ = cKDTree(z).query(z, k=2)
            if dist[:, 1].min() == 0:
                raise ValueError("coincident body positions")
        if self.cap_index is not None:
            idx = np.asarray(self.cap_index, dtype=int)
            if idx.shape != (len(z),) or idx.min() < 0 or idx.max() >= len(self.capacitances):
                raise ValueError("cap_index must assign a capacitance to every body")
            object.__setattr__(self, "cap_index", idx)

    @property
    def M(self) -> int:
        return len(self.positions)

    def with_capacitances(self, caps, index=None) -> "ScattererConfiguration":
        """Attach one shared capacitance or a list plus per-body indices."""
        if isinstance(caps, CapacitanceMatrix):
            caps = (caps,)
        caps = tuple(caps)
        if index is None:
            if len(caps) == 1:
                index = np.zeros(self.M, dtype=int)
            elif len(caps) == self.M:
                index = np.arange(self.M)
            else:
                raise ValueError("give one capacitance, one per body, or an index array")
        return ScattererConfiguration(
            self.positions, self.a, self.t, self.s, self.d_actual, self.alpha_dist,
            self.m_max_const, self.seed, self.d_min, self.cell_size, self.density_spec,
            caps, np.asarray(index, dtype=int),
        )

    def translated(self, h) -> "ScattererConfiguration":
        return ScattererConfiguration(
            self.positions + np.asarray(h, dtype=float), self.a, self.t, self.s, self.d_actual,
            self.alpha_dist, self.m_max_const, self.seed, self.d_min, self.cell_size,
            self.density_spec, self.capacitances, self.cap_index,
        )

    def capacitance_blocks(self) -> np.ndarray:
        """(M, 3, 3) absolute capacitances ``C_m = Cbar_m * a``."""
        if not self.capacitances:
            raise ValueError("no capacitances attached to the configuration")
        cbar = np.stack([c.c_elastic for c in self.capacitances])
        return cbar[self.cap_index] * self.a

    def max_acoustic(self) -> float:
        """max_m C^a_m a^{-1} (per unit diameter)."""
        return max(c.c_acoustic for c in self.capacitances)


@dataclass(frozen=True)
class ScatteringAmplitudes:
    q: np.ndarray  # (M, 3) complex
    residual_norm: float
    solver: str
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class FarFieldPattern:
    directions: np.ndarray  # (n, 3)
    p_part: np.ndarray  # (n, 3) complex
    s_part: np.ndarray
    medium: ElasticMedium | None = None
    wave: IncidentPlaneWave | None = None

    @property
    def total(self) -> np.ndarray:
        return self.p_part + self.s_part

    def polarization_defects(self):
        """Largest relative |xhat x P| and |xhat . S| over the directions."""
        x = self.directions
        pn = np.linalg.norm(self.p_part, axis=1)
        sn = np.linalg.norm(self.s_part, axis=1)
        cross = np.linalg.norm(np.cross(x, self.p_part), axis=1)
        dot = np.abs(np.einsum("nk,nk->n", x, self.s_part))
        with np.errstate(invalid="ignore", divide="ignore"):
            p_def = np.where(pn > 0, cross / pn, 0.0)
            s_def = np.where(sn > 0, dot / sn, 0.0)
        return float(p_def.max()), float(s_def.max())

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.total, axis=1).max())


@dataclass(frozen=True)
class PrecheckReport:
    cond1_value: float
    cond1_bound: float
    cond1_pass: bool
    cond2_value: float
    cond2_bound: float
    cond2_pass: bool
    c_ring: float
    c_ring_reliable: bool
    m_max: float

    @property
    def passed(self) -> bool:
        return self.cond1_pass and self.cond2_pass

    @property
    def margins(self):
        return self.cond1_bound - self.cond1_value, self.cond2_bound - self.cond2_value

    def as_dict(self) -> dict:
        return {
            "sqrt(M-1)*a/d": self.cond1_value,
            "c0": self.cond1_bound,
            "condition1": self.cond1_pass,
            "max C^a/a": self.cond2_value,
            "pi/(sqrt(26 M_max) c_ring (lambda+2mu))": self.cond2_bound,
            "condition2": self.cond2_pass,
            "c_ring": self.c_ring,
            "c_ring_reliable": self.c_ring_reliable,
            "M_max": self.m_max,
        }


def precheck_invertibility(
    config: ScattererConfiguration,
    medium: ElasticMedium,
    diam_omega: float = math.sqrt(3),
    c0: float = 1.0,
) -> PrecheckReport:
    """Evaluate the two sufficient conditions for a well-posed Foldy system."""
    M = config.M
    d = config.d_actual
    if M == 1:
        v1 = 0.0
    else:
        if not np.isfinite(d):
            from .distribution import min_pairwise_distance

            d = min_pairwise_distance(config.positions) - config.a
        v1 = math.sqrt(M - 1) * config.a / d if d > 0 else math.inf
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        g = green_bound_constants(medium, diam_omega)
    m_max = config.m_max_const
    if not np.isfinite(m_max):
        m_max = M * config.a**config.s
    v2 = config.max_acoustic()
    bound2 = math.pi / (math.sqrt(26 * m_max) * g.c_ring * (medium.lam + 2 * medium.mu))
    if not g.reliable:
        warnings.warn("wavenumber outside the regime of the Green bounds; condition 2 is unreliable", RuntimeWarning, stacklevel=2)
    return PrecheckReport(v1, c0, v1 <= c0, v2, bound2, v2 < bound2, g.c_ring, g.reliable, m_max)


def amplitude_norm_bound(config: ScattererConfiguration, medium: ElasticMedium, wave, diam_omega=math.sqrt(3)):
    """Right-hand side of the a-priori bound on sum_m |Q_m|^2 (nan if vacuous)."""
    rep = precheck_invertibility(config, medium, diam_omega)
    cmax = config.max_acoustic() * config.a
    denom = 1 / (medium.lam + 2 * medium.mu) - math.sqrt(26 * rep.m_max) * rep.c_ring * config.max_acoustic() / math.pi
    if denom <= 0:
        return float("nan")
    ui = wave.field(medium, config.positions)
    return denom**-2 * cmax**2 * float(np.sum(np.abs(ui) ** 2))


def foldy_matrix(config: ScattererConfiguration, medium: ElasticMedium) -> np.ndarray:
    """Dense 3M x 3M matrix of the unscaled system."""
    z = config.positions
    M = config.M
    B = np.zeros((M, 3, M, 3), dtype=complex)
    if M > 1:
        i, j = np.nonzero(~np.eye(M, dtype=bool))
        d = z[i] - z[j]
        r = np.linalg.norm(d, axis=1)
        alpha, beta = kupradze_coefficients(medium, r)
        e = d / r[:, None]
        blocks = alpha[:, None, None] * np.eye(3) + beta[:, None, None] * e[:, :, None] * e[:, None, :]
        B[i, :, j, :] = blocks
    cinv = np.linalg.inv(config.capacitance_blocks())
    idx = np.arange(M)
    B[idx, :, idx, :] = cinv
    return B.reshape(3 * M, 3 * M)


def _waves(wave):
    return list(wave) if isinstance(wave, (list, tuple)) else [wave]


def solve_foldy(
    config: ScattererConfiguration,
    medium: ElasticMedium,
    wave,
    *,
    method: str = "auto",
    rtol: float = 1e-10,
    maxiter: int | None = None,
    override_precheck: bool = True,
    diam_omega: float = math.sqrt(3),
):
    """Solve for the amplitudes; ``wave`` may be one wave or a list of waves.

    ``method`` is ``dense``, ``iterative`` or ``auto`` (dense up to
    ``DENSE_LIMIT`` unknowns).  Without ``override_precheck`` a failing
    precheck raises.
    """
    if not override_precheck:
        rep = precheck_invertibility(config, medium, diam_omega)
        if not rep.passed:
            raise ValueError(f"invertibility precheck failed: {rep.as_dict()}")
    waves = _waves(wave)
    M = config.M
    C = config.capacitance_blocks()
    if np.any(np.linalg.eigvalsh(0.5 * (C + np.transpose(C, (0, 2, 1))))[:, 0] <= 0):
        raise ValueError("capacitance matrices must be positive definite")
    U = np.stack([w.field(medium, config.positions) for w in waves], axis=-1)  # (M, 3, k)
    rhs = -np.einsum("mij,mjk->mik", C, U).reshape(3 * M, -1)
    if method == "auto":
        method = "dense" if 3 * M <= DENSE_LIMIT else "iterative"
    history: list = []
    if method == "dense":
        # scaled matrix I + C G, formed blockwise
        B = foldy_matrix(config, medium).reshape(M, 3, M, 3)
        A = np.einsum("mij,mjnk->mink", C, B).reshape(3 * M, 3 * M)
        Q = sla.solve(A, rhs, check_finite=False)
        iters = 0
        solver = "dense"
    elif method == "iterative":
        params = kernel_params(medium)
        z = config.positions

        def matvec(X):
            out = np.empty_like(X)
            for c in range(X.shape[1]):
                q = X[:, c].reshape(M, 3)
                g = apply_kupradze(params, z, z, q, same=True)
                out[:, c] = (q + np.einsum("mij,mj->mi", C, g)).ravel()
            return out

        if maxiter is None:
            maxiter = max(int(10 * math.sqrt(3 * M)), 20)
        Q, info = gmres(matvec, rhs.astype(complex), rtol=0.1 * rtol, maxiter=maxiter)
        iters = info.iterations
        history = info.history
        solver = "iterative"
    else:
        raise ValueError(f"unknown method {method!r}")

    # residual of the unscaled system: C^{-1} Q + G Q + U^i
    Qr = Q.reshape(M, 3, -1)
    cinv = np.linalg.inv(C)
    res = []
    params = kernel_params(medium)
    for c in range(Qr.shape[2]):
        g = apply_kupradze(params, config.positions, config.positions, Qr[:, :, c], same=True)
        r = np.einsum("mij,mj->mi", cinv, Qr[:, :, c]) + g + U[:, :, c]
        res.append(np.linalg.norm(r) / np.linalg.norm(U[:, :, c]))
    res = float(max(res))
    if res > rtol:
        raise RuntimeError(f"Foldy solve residual {res:.3e} exceeds {rtol:.1e}")
    amps = [ScatteringAmplitudes(Qr[:, :, c].copy(), res, solver, iters, history) for c in range(Qr.shape[2])]
    return amps if isinstance(wave, (list, tuple)) else amps[0]


def _check_directions(directions):
    x = np.asarray(directions, dtype=float).reshape(-1, 3)
    if np.any(np.abs(np.linalg.norm(x, axis=1) - 1) > 1e-12):
        raise ValueError("far-field directions must be unit vectors")
    return x


def farfield_from_sources(medium: ElasticMedium, points, sources, directions, wave=None) -> FarFieldPattern:
    """P and S far fields of point sources ``sources`` (n, 3) located at ``points``."""
    x = _check_directions(directions)
    points = np.asarray(points, dtype=float)
    sources = np.asarray(sources, dtype=complex)
    phase = x @ points.T  # (ndir, n)
    sum_p = np.exp(-1j * medium.kappa_p * phase) @ sources
    sum_s = np.exp(-1j * medium.kappa_s * phase) @ sources
    xx = x[:, :, None] * x[:, None, :]
    up = np.einsum("nij,nj->ni", xx, sum_p) / (4 * np.pi * medium.c_p**2)
    us = np.einsum("nij,nj->ni", np.eye(3) - xx, sum_s) / (4 * np.pi * medium.c_s**2)
    return FarFieldPattern(x, up, us, medium, wave)


def foldy_farfield(amps: ScatteringAmplitudes, config: ScattererConfiguration, medium: ElasticMedium, directions, wave=None) -> FarFieldPattern:
    """Leading-order far field of the cluster (no remainder terms added)."""
    return farfield_from_sources(medium, config.positions, amps.q, directions, wave)


def cube_directions() -> np.ndarray:
    """The 26 face, edge and corner directions of a cube, normalised."""
    d = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1) if (i, j, k) != (0, 0, 0)], dtype=float)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


_CSV_HEADER = (
    ["xhat_x", "xhat_y", "xhat_z"]
    + [f"Re(Up{i})" for i in (1, 2, 3)]
    + [f"Im(Up{i})" for i in (1, 2, 3)]
    + [f"Re(Us{i})" for i in (1, 2, 3)]
    + [f"Im(Us{i})" for i in (1, 2, 3)]
)


def write_farfield_csv(pattern: FarFieldPattern, path, comment: str | None = None) -> None:
    """One row per direction, 17 significant digits; written atomically."""
    tmp = f"{path}.{os.getpid()}.tmp"
    with open(tmp, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(_CSV_HEADER)
        for x, p, s in zip(pattern.directions, pattern.p_part, pattern.s_part):
            row = list(x) + list(p.real) + list(p.imag) + list(s.real) + list(s.imag)
            w.writerow([f"{v:.17g}" for v in row])
    os.replace(tmp, path)


def read_farfield_csv(path) -> FarFieldPattern:
    with open(path) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    x = data[:, 0:3]
    p = data[:, 3:6] + 1j * data[:, 6:9]
    s = data[:, 9:12] + 1j * data[:, 12:15]
    return FarFieldPattern(x, p, s)
