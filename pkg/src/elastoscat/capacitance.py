"""Acoustic and elastic capacitances of a reference body by collocation BEM.

The density is piecewise constant on the triangles and the first-kind
equations

    int_dB sigma(s) / (4 pi |t - s|) ds = 1,
    int_dB Gamma^0(t, s) sigma(s) ds = I,

are collocated at triangle centroids.  The Kelvin tensor splits as

    Gamma^0 = (a'/2) * [1 / (4 pi r)] I + (b'/2) * [d d^T / (4 pi r^3)],
    a' = 1/mu + 1/(lam + 2 mu),  b' = 1/mu - 1/(lam + 2 mu),

so the two scalar/tensor layer matrices are geometric and are assembled
once per mesh, then recombined for every Lame pair.

Unknowns are triangle charges ``x_j = area_j * sigma_j`` so the system
matrix entries are kernel averages; the capacitance is the sum of charges.
The collocation matrix is symmetrised entry-wise before solving.  Far pairs
(one-point rule) are symmetric already, so only near-pair entries change.
``err_estimate`` adds two first-order perturbation terms: restoring the
antisymmetric near part (plain collocation) and replacing the near rules by
the next cheaper ones (quadrature error indicator).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree

from .krylov import gmres
from .mesh import SurfaceMesh
from .quadrature import NEAR_RATIO, PACKED, centroid_block, near_rule, self_rule, unpack

__all__ = [
    "CapacitanceMatrix",
    "LayerOperator",
    "SolverError",
    "layer_operator",
    "acoustic_capacitance",
    "elastic_capacitance",
    "conjugate_capacitance",
    "sphere_capacitance_exact",
    "richardson",
    "CapacitanceCache",
]

# above this many unknowns the elastic system is solved by preconditioned GMRES
DIRECT_LIMIT = 6000
_OPERATOR_BUDGET = 2.2e9  # bytes of cached layer matrices


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class CapacitanceMatrix:
    """Elastic capacitance per unit diameter together with its acoustic peer.

    ``c_elastic`` and ``c_acoustic`` are divided by the mesh diameter, so a
    body of diameter ``a`` has capacitance ``c_elastic * a``.
    """

    c_elastic: np.ndarray
    c_acoustic: float
    lam: float
    mu: float
    shape: str = "custom"
    level: int = 0
    diameter: float = 1.0
    n_triangles: int = 0
    asymmetry: float = 0.0
    err_estimate: float = 0.0
    condition: float = float("nan")
    solver: str = "direct"
    raw: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        c = np.array(self.c_elastic, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "c_elastic", c)

    def scaled(self, a: float) -> np.ndarray:
        """Capacitance matrix of the body rescaled to diameter ``a``."""
        return self.c_elastic * a

    @property
    def absolute(self) -> np.ndarray:
        return self.c_elastic * self.diameter

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.c_elastic)

    def bracket(self):
        """(mu C^a, lambda_min, lambda_max, (lam + 2 mu) C^a), per unit diameter."""
        ev = self.eigenvalues
        return (
            self.mu * self.c_acoustic,
            float(ev[0]),
            float(ev[-1]),
            (self.lam + 2 * self.mu) * self.c_acoustic,
        )

    def off_diagonal_ratio(self) -> float:
        c = self.c_elastic
        off = c - np.diag(np.diag(c))
        return float(np.abs(off).max() / np.abs(np.diag(c)).max())

    def to_record(self) -> dict:
        return {
            "shape": self.shape,
            "level": self.level,
            "lambda": self.lam,
            "mu": self.mu,
            "c_acoustic": self.c_acoustic,
            "c_elastic": self.c_elastic.tolist(),
            "err_estimate": self.err_estimate,
            "diameter": self.diameter,
            "n_triangles": self.n_triangles,
            "asymmetry": self.asymmetry,
            "condition": self.condition,
            "solver": self.solver,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CapacitanceMatrix":
        return cls(
            np.array(rec["c_elastic"], dtype=float),
            float(rec["c_acoustic"]),
            float(rec["lambda"]),
            float(rec["mu"]),
            rec.get("shape", "custom"),
            int(rec.get("level", 0)),
            float(rec.get("diameter", 1.0)),
            int(rec.get("n_triangles", 0)),
            float(rec.get("asymmetry", 0.0)),
            float(rec.get("err_estimate", 0.0)),
            float(rec.get("condition", float("nan"))),
            rec.get("solver", "direct"),
        )

    @classmethod
    def scalar(cls, c: float, lam: float, mu: float, c_acoustic: float = float("nan")):
        """A synthetic ``c * I`` capacitance, e.g. the analytic sphere value."""
        return cls(c * np.eye(3), c_acoustic, lam, mu, shape="scalar")


def _fingerprint(mesh: SurfaceMesh) -> str:
    h = hashlib.sha1()
    h.update(mesh.vertices.tobytes())
    h.update(mesh.triangles.tobytes())
    return h.hexdigest()


class LayerOperator:
    """Symmetrised collocation matrices of the two layer kernels on a mesh.

    Attributes
    ----------
    S : (N, N) kernel averages of 1/(4 pi r)
    T : (6, N, N) packed kernel averages of d d^T/(4 pi r^3)
    near_pairs : (P, 2) index pairs i < j whose entries used near rules
    anti_s, anti_t : antisymmetric parts of the unsymmetrised near entries
    """

    def __init__(self, mesh: SurfaceMesh):
        mesh.validate()
        self.mesh = mesh
        self.n = n = mesh.n_triangles
        corners = mesh.corners
        areas = mesh.areas
        cen = mesh.centroids
        self.areas = areas
        self.diameter = mesh.diameter

        S = np.empty((n, n))
        T = np.empty((6, n, n))
        centroid_block(np.ascontiguousarray(cen), 0, n, S, T)

        edge = np.linalg.norm(corners - np.roll(corners, 1, axis=1), axis=2).max(axis=1)
        tree = cKDTree(cen)
        pairs = tree.query_pairs(NEAR_RATIO * edge.max(), output_type="ndarray")
        if len(pairs):
            pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
            i, j = pairs[:, 0], pairs[:, 1]
            tgt = np.concatenate([i, j])
            src = np.concatenate([j, i])
            dist = np.linalg.norm(cen[tgt] - cen[src], axis=1)
            s, t = near_rule(cen[tgt], corners[src], areas[src], dist / edge[src])
            sc, tc = near_rule(cen[tgt], corners[src], areas[src], dist / edge[src], coarse=True)
            s = s / areas[src]
            t = t / areas[src, None]
            m = len(i)
            # symmetrised change of the near entries under the coarser rules
            ds = (s - sc / areas[src])
            dt = (t - tc / areas[src, None])
            self.quad_s = 0.5 * (ds[:m] + ds[m:])
            self.quad_t = 0.5 * (dt[:m] + dt[m:])
            s_ij, s_ji = s[:m], s[m:]
            t_ij, t_ji = t[:m], t[m:]
            S[i, j] = S[j, i] = 0.5 * (s_ij + s_ji)
            T[:, i, j] = T[:, j, i] = 0.5 * (t_ij + t_ji).T
            self.anti_s = 0.5 * (s_ij - s_ji)
            self.anti_t = 0.5 * (t_ij - t_ji)
        else:
            self.anti_s = np.zeros(0)
            self.anti_t = np.zeros((0, 6))
            self.quad_s = np.zeros(0)
            self.quad_t = np.zeros((0, 6))
        self.near_pairs = pairs.reshape(-1, 2)

        s, t = self_rule(corners)
        diag = np.arange(n)
        S[diag, diag] = s / areas
        T[:, diag, diag] = (t / areas[:, None]).T
        self.S = S
        self.T = T
        self._s_factor = None

    @property
    def nbytes(self) -> int:
        return self.S.nbytes + self.T.nbytes

    # acoustic ---------------------------------------------------------------
    def s_factor(self):
        """Cholesky (or LU when indefinite) factorisation of S, cached."""
        if self._s_factor is None:
            anorm = np.abs(self.S).sum(axis=0).max()
            try:
                c, low = sla.cho_factor(self.S, lower=False, check_finite=False)
                rcond, _ = sla.lapack.dpocon(c, anorm)
                self._s_factor = ("chol", (c, low), 1.0 / rcond if rcond > 0 else np.inf)
            except np.linalg.LinAlgError:
                lu, piv = sla.lu_factor(self.S, check_finite=False)
                rcond, _ = sla.lapack.dgecon(lu, anorm)
                self._s_factor = ("lu", (lu, piv), 1.0 / rcond if rcond > 0 else np.inf)
        return self._s_factor

    def s_solve(self, b):
        kind, fac, _ = self.s_factor()
        if kind == "chol":
            return sla.cho_solve(fac, b, check_finite=False)
        return sla.lu_solve(fac, b, check_finite=False)

    def acoustic(self) -> float:
        kind, _, cond = self.s_factor()
        if not np.isfinite(cond) or cond > 1e14:
            raise SolverError(f"acoustic collocation matrix is singular (condition estimate {cond:.3e})")
        return float(self.s_solve(np.ones(self.n)).sum())

    # elastic ----------------------------------------------------------------
    def elastic_dense(self, a2: float, b2: float) -> np.ndarray:
        n = self.n
        M = np.zeros((n, 3, n, 3))
        for k in range(3):
            M[:, k, :, k] = a2 * self.S
        for c, (k, l) in enumerate(PACKED):
            M[:, k, :, l] += b2 * self.T[c]
            if k != l:
                M[:, l, :, k] += b2 * self.T[c]
        return M.reshape(3 * n, 3 * n)

    def elastic_matvec(self, a2: float, b2: float):
        n = self.n

        def mv(X):
            ncol = X.shape[1]
            Xr = X.reshape(n, 3, ncol)
            Y = a2 * (self.S @ Xr.reshape(n, 3 * ncol)).reshape(n, 3, ncol)
            for c, (k, l) in enumerate(PACKED):
                if k == l:
                    Y[:, k] += b2 * (self.T[c] @ Xr[:, k])
                else:
                    Z = b2 * (self.T[c] @ np.concatenate([Xr[:, l], Xr[:, k]], axis=1))
                    Y[:, k] += Z[:, :ncol]
                    Y[:, l] += Z[:, ncol:]
            return Y.reshape(3 * n, ncol)

        return mv

    def _near_form(self, X, a2, b2, ps, pt, sign):
        # X^T D X for D_ij = B_p, D_ji = sign * B_p over near pairs p = (i, j)
        if len(self.near_pairs) == 0:
            return np.zeros((X.shape[1], X.shape[1]))
        i, j = self.near_pairs[:, 0], self.near_pairs[:, 1]
        B = b2 * unpack(pt) + a2 * ps[:, None, None] * np.eye(3)
        Xr = X.reshape(self.n, 3, X.shape[1])
        term = np.einsum("pka,pkl,plb->ab", Xr[i], B, Xr[j])
        return term + sign * term.T

    def first_order_asymmetry(self, X: np.ndarray, a2: float, b2: float) -> np.ndarray:
        """Change of E^T K^{-1} E when the antisymmetric near part is restored."""
        return -self._near_form(X, a2, b2, self.anti_s, self.anti_t, -1.0)

    def first_order_quadrature(self, X: np.ndarray, a2: float, b2: float) -> np.ndarray:
        """Change of E^T K^{-1} E when near entries use the coarser rules."""
        return self._near_form(X, a2, b2, self.quad_s, self.quad_t, 1.0)


_OPERATORS: "OrderedDict[str, LayerOperator]" = OrderedDict()
_RESULTS: dict = {}


def layer_operator(mesh: SurfaceMesh) -> LayerOperator:
    """Return the (memoised) layer operator of ``mesh``."""
    key = _fingerprint(mesh)
    if key in _OPERATORS:
        _OPERATORS.move_to_end(key)
        return _OPERATORS[key]
    op = LayerOperator(mesh)
    _OPERATORS[key] = op
    while len(_OPERATORS) > 1 and sum(o.nbytes for o in _OPERATORS.values()) > _OPERATOR_BUDGET:
        _OPERATORS.popitem(last=False)
    return op


def acoustic_capacitance(mesh: SurfaceMesh) -> float:
    """Capacitance ``int sigma ds`` of the scalar single-layer equation (absolute units)."""
    return layer_operator(mesh).acoustic()


def elastic_capacitance(
    mesh: SurfaceMesh,
    lam: float,
    mu: float,
    *,
    direct_limit: int = DIRECT_LIMIT,
    rtol: float = 1e-12,
) -> CapacitanceMatrix:
    """Elastic capacitance matrix of ``mesh`` for the Lame pair (lam, mu)."""
    if not mu > 0 or not 3 * lam + 2 * mu > 0:
        raise ValueError(f"invalid Lame pair (lambda={lam}, mu={mu}): need mu > 0 and 3 lambda + 2 mu > 0")
    key = (_fingerprint(mesh), float(lam), float(mu), direct_limit)
    if key in _RESULTS:
        return _RESULTS[key]
    op = layer_operator(mesh)
    n = op.n
    inv_p = 1.0 / (lam + 2 * mu)
    a2 = 0.5 * (1 / mu + inv_p)
    b2 = 0.5 * (1 / mu - inv_p)
    E = np.tile(np.eye(3), (n, 1))

    if 3 * n <= direct_limit:
        M = op.elastic_dense(a2, b2)
        anorm = np.abs(M).sum(axis=0).max()
        lu, piv = sla.lu_factor(M, check_finite=False)
        rcond, _ = sla.lapack.dgecon(lu, anorm)
        cond = 1.0 / rcond if rcond > 0 else np.inf
        if not np.isfinite(cond) or cond > 1e14:
            raise SolverError(f"elastic collocation matrix is singular (condition estimate {cond:.3e})")
        X = sla.lu_solve((lu, piv), E, check_finite=False)
        solver = "direct"
    else:
        _, _, cond = op.s_factor()
        scale = 1.0 / (a2 + b2 / 3)

        def precond(V):
            ncol = V.shape[1]
            W = op.s_solve(V.reshape(n, 3 * ncol))
            return scale * W.reshape(3 * n, ncol)

        X, info = gmres(op.elastic_matvec(a2, b2), E, precond=precond, rtol=rtol, maxiter=400)
        solver = f"gmres({info.iterations})"

    raw = E.T @ X
    c_abs = 0.5 * (raw + raw.T)
    asym = float(np.linalg.norm(raw - raw.T) / np.linalg.norm(c_abs))
    dC = np.linalg.norm(op.first_order_asymmetry(X, a2, b2))
    dQ = np.linalg.norm(op.first_order_quadrature(X, a2, b2))
    err = float((dC + dQ) / np.linalg.norm(c_abs))
    # a symmetric operator must give a symmetric capacitance up to solver noise
    if asym > 10 * max(err, 1e3 * rtol):
        raise SolverError(
            f"capacitance asymmetry {asym:.3e} exceeds ten times the error estimate {err:.3e}"
        )
    diam = op.diameter
    result = CapacitanceMatrix(
        c_abs / diam,
        op.acoustic() / diam,
        float(lam),
        float(mu),
        mesh.shape,
        mesh.level,
        diam,
        n,
        asym,
        err,
        float(cond),
        solver,
        raw / diam,
    )
    _RESULTS[key] = result
    return result


def conjugate_capacitance(c: CapacitanceMatrix, r) -> CapacitanceMatrix:
    """Return the capacitance of the body rotated by the orthogonal matrix ``r``."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or np.abs(r.T @ r - np.eye(3)).max() > 1e-12:
        raise ValueError("rotation must be a real 3x3 matrix with r^T r = I within 1e-12")
    new = r @ c.c_elastic @ r.T
    raw = None if c.raw is None else r @ c.raw @ r.T
    return CapacitanceMatrix(
        new, c.c_acoustic, c.lam, c.mu, c.shape, c.level, c.diameter, c.n_triangles,
        c.asymmetry, c.err_estimate, c.condition, c.solver, raw,
    )


def sphere_capacitance_exact(radius: float, lam: float, mu: float) -> float:
    """Scalar elastic capacitance of a ball of the given radius.

    A constant density solves the first-kind equation on a sphere because
    the sphere averages of 1/r and d d^T/r^3 are R and (R/3) I.
    """
    return 12 * math.pi * radius / (2 / mu + 1 / (lam + 2 * mu))


def richardson(values, hs):
    """Extrapolate the last three values of a refinement sequence.

    Returns ``(limit, order)`` with the observed order estimated from the
    three values and mesh sizes ``hs`` (assumed geometric).
    """
    v1, v2, v3 = (np.asarray(v, dtype=float) for v in values[-3:])
    h1, h2, h3 = hs[-3:]
    ratio = h1 / h2
    num = np.linalg.norm(np.atleast_1d(v1 - v2))
    den = np.linalg.norm(np.atleast_1d(v2 - v3))
    order = math.log(num / den) / math.log(ratio)
    limit = v3 + (v3 - v2) / ((h2 / h3) ** order - 1)
    return limit, order


class CapacitanceCache:
    """JSON files keyed by shape, refinement and Lame pair."""

    def __init__(self, directory):
        self.directory = os.fspath(directory)

    def _path(self, shape, level, lam, mu, mesh_hash=""):
        key = json.dumps([shape, level, float(lam), float(mu), mesh_hash])
        digest = hashlib.sha1(key.encode()).hexdigest()[:16]
        return os.path.join(self.directory, f"cap_{shape}_{level}_{digest}.json")

    def get(self, shape, level, lam, mu, mesh_hash=""):
        path = self._path(shape, level, lam, mu, mesh_hash)
        if not os.path.exists(path):
            return None
        with open(path) as fh:
            return CapacitanceMatrix.from_record(json.load(fh))

    def put(self, cap: CapacitanceMatrix, mesh_hash="", extra=None) -> str:
        os.makedirs(self.directory, exist_ok=True)
        path = self._path(cap.shape, cap.level, cap.lam, cap.mu, mesh_hash)
        rec = cap.to_record()
        if extra:
            rec.update(extra)
        tmp = f"{path}.{os.getpid()}.tmp"
        with open(tmp, "w") as fh:
            json.dump(rec, fh, indent=2, sort_keys=True)
        os.replace(tmp, path)
        return path

    def get_or_compute(self, mesh: SurfaceMesh, lam, mu, extra=None):
        """Return ``(cap, hit)``; computes and stores on a miss."""
        fp = _fingerprint(mesh)
        cap = self.get(mesh.shape, mesh.level, lam, mu, fp)
        if cap is not None:
            return cap, True
        cap = elastic_capacitance(mesh, lam, mu)
        self.put(cap, fp, extra)
        return cap, False


def mesh_fingerprint(mesh: SurfaceMesh) -> str:
    return _fingerprint(mesh)
