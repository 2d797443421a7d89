"""End-to-end harnesses: convergence sweeps and effective-medium scenarios."""

from __future__ import annotations

import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .capacitance import CapacitanceCache, CapacitanceMatrix, elastic_capacitance
from .distribution import DensityFunction, InfeasibleDistribution, partition_domain, place_scatterers
from .effective import (
    PotentialField,
    VoxelGrid,
    _operator,
    effective_density,
    ls_farfield,
    reference_farfield,
    self_voxel_integral,
    solve_lippmann_schwinger,
)
from .foldy import (
    FarFieldPattern,
    ScattererConfiguration,
    cube_directions,
    farfield_from_sources,
    foldy_farfield,
    precheck_invertibility,
    solve_foldy,
    write_farfield_csv,
)
from .kernels import apply_kupradze, kernel_params
from .krylov import gmres
from .medium import ElasticMedium, IncidentPlaneWave, make_medium
from .mesh import builtin_mesh

__all__ = [
    "SweepSpec",
    "SweepResult",
    "SweepError",
    "ScenarioError",
    "body_capacitance",
    "fit_loglog",
    "farfield_discrepancy",
    "convergence_sweep",
    "amplitude_scaling",
    "run_scenario",
    "solve_hybrid",
    "write_sweep_report",
]


class SweepError(RuntimeError):
    """A sweep stage failed; ``partial`` holds the a-points already done."""

    def __init__(self, stage: str, a: float, cause: Exception, partial: list):
        super().__init__(f"sweep stage '{stage}' failed at a = {a:.6g}: {cause}")
        self.stage = stage
        self.partial = partial


class ScenarioError(ValueError):
    pass


def body_capacitance(shape: str = "sphere", level: int = 3, lam: float = 1.0, mu: float = 1.0, cache_dir=None) -> CapacitanceMatrix:
    """Capacitance of a builtin unit-diameter body, optionally cached on disk."""
    mesh = builtin_mesh(shape, level)
    if cache_dir is None:
        return elastic_capacitance(mesh, lam, mu)
    return CapacitanceCache(cache_dir).get_or_compute(mesh, lam, mu)[0]


def fit_loglog(x, y):
    """Least-squares line through ``(log x, log y)``: slope, intercept, residuals."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(coef[0]), float(coef[1]), ly - A @ coef


def farfield_discrepancy(a: FarFieldPattern, b: FarFieldPattern) -> float:
    """Max over directions of the larger of the P and S difference norms."""
    if not np.allclose(a.directions, b.directions, atol=0, rtol=0):
        raise ValueError("patterns use different direction sets")
    dp = np.linalg.norm(a.p_part - b.p_part, axis=1)
    ds = np.linalg.norm(a.s_part - b.s_part, axis=1)
    return float(np.maximum(dp, ds).max())


def _default_wave():
    return IncidentPlaneWave.along([0.0, 0.0, 1.0], 1.0, 0.5)


@dataclass
class SweepSpec:
    """Parameters of a convergence sweep; ``a_values`` strictly decreasing."""

    a_values: tuple = tuple(2.0**-k for k in range(6, 13))
    t: float = 1 / 3
    density: DensityFunction = field(default_factory=lambda: DensityFunction.constant(0.0))
    shape: str = "sphere"
    level: int = 3
    medium: ElasticMedium = field(default_factory=lambda: make_medium(1.0, 1.0, 1.0))
    wave: IncidentPlaneWave = field(default_factory=_default_wave)
    seed: int = 0
    d_min: float | None = None
    ls_levels: tuple = (16, 32, 64)

    def __post_init__(self):
        a = np.asarray(self.a_values, dtype=float)
        if len(a) < 4:
            raise ValueError("a sweep needs at least 4 values of a to fit a rate")
        if np.any(np.diff(a) >= 0) or np.any(a <= 0):
            raise ValueError("a_values must be positive and strictly decreasing")
        if self.t >= 0.5:
            raise ValueError("rate fitting is refused for t >= 1/2 (the predicted exponent 3/2 - 3t is not positive enough)")
        if self.t < 1 / 3:
            raise InfeasibleDistribution("packing bound violated: t < 1/3 cannot be realised: M (a/2 + d/2)^3 <= |Omega| forces t >= 1/3")
        if self.t > 1 / 3 + 1e-12:
            warnings.warn("1/3 < t < 1/2: preasymptotic effects may dominate the fitted rate", RuntimeWarning, stacklevel=2)
        self.a_values = tuple(float(v) for v in a)

    @property
    def gamma(self) -> float:
        g = self.density.holder_gamma
        return 1.0 if g == "unknown" else float(g)

    @property
    def predicted_exponent(self) -> float:
        return min(self.gamma, 1 / 3, 1.5 - 3 * self.t)

    def as_dict(self) -> dict:
        return {
            "a_values": list(self.a_values),
            "t": self.t,
            "K": self.density.to_json(),
            "gamma": self.density.holder_gamma,
            "shape": self.shape,
            "level": self.level,
            "medium": self.medium.as_dict(),
            "wave": self.wave.as_dict(),
            "seed": self.seed,
            "d_min": self.d_min,
            "ls_levels": list(self.ls_levels),
            "predicted_exponent": self.predicted_exponent,
        }


@dataclass
class SweepResult:
    spec: SweepSpec
    per_a: list
    slope: float
    intercept: float
    residuals: np.ndarray
    reference: FarFieldPattern
    reference_order: float
    farfields: dict
    capacitance: CapacitanceMatrix

    @property
    def errors(self) -> np.ndarray:
        return np.array([p["e"] for p in self.per_a])

    def monotonicity_violations(self) -> list:
        """Indices ``i`` with ``e[i+1] > e[i]`` (a decreasing)."""
        e = self.errors
        return [i for i in range(len(e) - 1) if e[i + 1] > e[i]]

    def report(self) -> dict:
        viol = self.monotonicity_violations()
        return {
            "spec": self.spec.as_dict(),
            "per_a": self.per_a,
            "slope": self.slope,
            "intercept": self.intercept,
            "fit_residuals": self.residuals.tolist(),
            "predicted_exponent": self.spec.predicted_exponent,
            "reference_order": self.reference_order,
            "monotonicity_violations": viol,
            "preasymptotic_flag": len(viol) > 0,
            "capacitance": self.capacitance.to_record(),
        }


def _place(a, spec_density, t, seed, d_min, s=1.0):
    part = partition_domain(a, spec_density, s=s)
    kw = {} if d_min is None else {"d_min": d_min}
    return place_scatterers(part, t=t, seed=seed, **kw)


def convergence_sweep(spec: SweepSpec, capacitance: CapacitanceMatrix | None = None, directions=None, progress=None) -> SweepResult:
    """Compare cluster and equivalent-medium far fields over decreasing ``a``.

    The equivalent-medium reference (potential ``(K+1) C0`` with ``C0`` the
    per-unit-diameter capacitance) does not depend on ``a`` and is computed
    once by Richardson extrapolation over ``spec.ls_levels``.
    """
    medium, wave = spec.medium, spec.wave
    directions = cube_directions() if directions is None else directions
    per_a: list = []
    farfields: dict = {}
    stage = "capacitance"
    try:
        cap = capacitance or body_capacitance(spec.shape, spec.level, medium.lam, medium.mu)
        stage = "equivalent medium"
        c0 = cap.c_elastic
        ref, order, _ = reference_farfield(
            medium, lambda g: PotentialField.perforation(g, spec.density, c0), wave, directions, spec.ls_levels
        )
    except Exception as exc:  # noqa: BLE001
        raise SweepError(stage, spec.a_values[0], exc, per_a) from exc
    for a in spec.a_values:
        t0 = time.perf_counter()
        stage = "placement"
        try:
            cfg = _place(a, spec.density, spec.t, spec.seed, spec.d_min).with_capacitances(cap)
            stage = "precheck"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                pre = precheck_invertibility(cfg, medium)
            stage = "foldy"
            amps = solve_foldy(cfg, medium, wave)
            ff = foldy_farfield(amps, cfg, medium, directions, wave)
        except Exception as exc:  # noqa: BLE001
            raise SweepError(stage, a, exc, per_a) from exc
        e = farfield_discrepancy(ff, ref)
        rec = {
            "a": a,
            "M": cfg.M,
            "d_actual": cfg.d_actual,
            "e": e,
            "runtime_s": time.perf_counter() - t0,
            "solver": amps.solver,
            "iterations": amps.iterations,
            "residual": amps.residual_norm,
            "precheck": pre.as_dict(),
            "precheck_overridden": not pre.passed,
        }
        per_a.append(rec)
        farfields[a] = ff
        if progress:
            progress(rec)
    slope, intercept, res = fit_loglog([p["a"] for p in per_a], [p["e"] for p in per_a])
    return SweepResult(spec, per_a, slope, intercept, res, ref, order, farfields, cap)


def write_sweep_report(result: SweepResult, outdir, extra: dict | None = None) -> dict:
    """Write ``report.json`` and one far-field CSV per ``a``; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = {}
    rep = result.report()
    if extra:
        rep.update(extra)
    path = os.path.join(outdir, "report.json")
    _atomic_json(path, rep)
    paths["report"] = path
    for k, (a, ff) in enumerate(sorted(result.farfields.items(), reverse=True)):
        p = os.path.join(outdir, f"farfield_a{k:02d}.csv")
        write_farfield_csv(ff, p, comment=f"a = {a!r}")
        paths[f"farfield_{a!r}"] = p
    p = os.path.join(outdir, "farfield_reference.csv")
    write_farfield_csv(result.reference, p, comment="equivalent medium, extrapolated")
    paths["reference"] = p
    return paths


def _atomic_json(path, obj):
    tmp = f"{path}.{os.getpid()}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, path)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def amplitude_scaling(a_values, capacitance: CapacitanceMatrix, medium=None, wave=None, density=None, t=1 / 3, seed=0):
    """max_m |Q_m| for each ``a`` and the fitted log-log slope."""
    medium = medium or make_medium(1.0, 1.0, 1.0)
    wave = wave or _default_wave()
    density = density or DensityFunction.constant(0.0)
    qmax = []
    for a in a_values:
        cfg = _place(a, density, t, seed, None).with_capacitances(capacitance)
        amps = solve_foldy(cfg, medium, wave)
        qmax.append(float(np.linalg.norm(amps.q, axis=1).max()))
    slope, intercept, _ = fit_loglog(a_values, qmax)
    return np.array(qmax), slope, intercept


def solve_hybrid(
    config: ScattererConfiguration,
    background: PotentialField,
    medium: ElasticMedium,
    wave: IncidentPlaneWave,
    *,
    rtol: float = 1e-10,
    maxiter: int = 600,
):
    """Bodies embedded in a variable-density background.

    Unknowns are the voxel values ``Y`` (minus the total field) and the body
    amplitudes ``Q``; with ``q`` the background potential,

        Y + A(q Y) + sum_m Gamma(., z_m) Q_m = -U^i         at voxel centres,
        C_m^{-1} Q_m + sum_{j != m} Gamma Q_j + int Gamma q Y = -U^i(z_m).

    Body-voxel pairs closer than half a voxel use the voxel-averaged kernel.
    Returns ``(Y, Q, residual, iterations)``.
    """
    grid = background.grid
    h = grid.h
    N, M = grid.size, config.M
    z = config.positions
    x = grid.centers
    op = _operator(medium, grid, "cube")
    params = kernel_params(medium)
    near = self_voxel_integral(medium, h) / h**3
    C = config.capacitance_blocks()
    qv = background.q

    def interactions(Y, Q):
        src = np.einsum("nij,nj->ni", qv, Y)
        vox = op.convolve(src) + apply_kupradze(params, x, z, Q, near_radius=0.5 * h, near_value=near)
        bod = apply_kupradze(params, z, z, Q, same=True) + apply_kupradze(params, z, x, src * h**3, near_radius=0.5 * h, near_value=near)
        return vox, bod

    def split(v):
        return v[: 3 * N].reshape(N, 3), v[3 * N :].reshape(M, 3)

    def matvec(X):
        out = np.empty_like(X)
        for c in range(X.shape[1]):
            Y, Q = split(X[:, c])
            vox, bod = interactions(Y, Q)
            out[:, c] = np.concatenate([(Y + vox).ravel(), (Q + np.einsum("mij,mj->mi", C, bod)).ravel()])
        return out

    ux, uz = wave.field(medium, x), wave.field(medium, z)
    rhs = np.concatenate([-ux.ravel(), -np.einsum("mij,mj->mi", C, uz).ravel()])[:, None].astype(complex)
    sol, info = gmres(matvec, rhs, rtol=0.1 * rtol, maxiter=maxiter)
    Y, Q = split(sol[:, 0])
    vox, bod = interactions(Y, Q)
    r = np.concatenate([(Y + vox + ux).ravel(), (np.einsum("mij,mj->mi", np.linalg.inv(C), Q) + bod + uz).ravel()])
    res = float(np.linalg.norm(r) / np.linalg.norm(np.concatenate([ux.ravel(), uz.ravel()])))
    if res > rtol:
        raise RuntimeError(f"hybrid solve residual {res:.3e} exceeds {rtol:.1e}")
    return Y, Q, res, info.iterations


def _scenario_negative_density(p):
    medium = make_medium(p.get("lam", 1.0), p.get("mu", 1.0), p.get("omega", 1.0))
    rho = float(p.get("rho", 1.0))
    k1 = float(p.get("k_plus_1", 1.0))
    c = float(p.get("c", 2.0))
    if not k1 * c > medium.omega**2 * rho:
        raise ScenarioError(f"negative density needs (K+1) c > omega^2 rho, got {k1 * c} <= {medium.omega**2 * rho}")
    rho_eff = effective_density(rho, k1, c * np.eye(3), medium.omega)
    eig = np.linalg.eigvalsh(rho_eff)
    if not eig.max() < 0:
        raise ScenarioError("effective density is not negative definite")
    grid = VoxelGrid(int(p.get("n", 16)))
    pot = PotentialField.constant(grid, medium.omega**2 * (np.eye(3) - rho_eff))
    wave = p.get("wave") or _default_wave()
    y = solve_lippmann_schwinger(medium, pot, wave)
    ff = ls_farfield(medium, pot, y, cube_directions(), wave)
    return {
        "scenario": "negative_density",
        "effective_density": rho_eff.tolist(),
        "eigenvalues": eig.tolist(),
        "negative_definite": True,
        "farfield_max": ff.max_norm(),
        "iterations": y.iterations,
        "farfield": ff,
    }


def _scenario_cloak(p):
    medium = make_medium(p.get("lam", 1.0), p.get("mu", 1.0), p.get("omega", 1.0))
    w2 = medium.omega**2
    wave = p.get("wave") or _default_wave()
    dirs = cube_directions()
    report = {"scenario": "cloak"}

    # equivalent medium with an exactly nulled contrast
    density = DensityFunction.from_spec(p.get("K", {"type": "affine", "value": 1.0, "gradient": [0.5, 0.25, 0.0]}))
    c = float(p.get("c", 2 * math.pi))
    grid = VoxelGrid(int(p.get("n", 16)))
    rho = 1.0 + (density(grid.centers) + 1.0) * c / w2
    rho_only = PotentialField.zero(grid).with_background(rho, medium.omega)
    cloaked = PotentialField.perforation(grid, density, c * np.eye(3)).with_background(rho, medium.omega)
    y0 = solve_lippmann_schwinger(medium, rho_only, wave)
    ff0 = ls_farfield(medium, rho_only, y0, dirs, wave)
    y1 = solve_lippmann_schwinger(medium, cloaked, wave)
    ff1 = ls_farfield(medium, cloaked, y1, dirs, wave)
    report["exact_null"] = {
        "rho_only_max": ff0.max_norm(),
        "cloaked_max": ff1.max_norm(),
        "max_contrast": float(np.abs(cloaked.q).max()),
        "reduction_ratio": ff1.max_norm() / ff0.max_norm(),
    }

    # discrete bodies inside the matched background
    cap = p.get("capacitance") or body_capacitance(p.get("shape", "sphere"), int(p.get("level", 2)), medium.lam, medium.mu)
    cbar = float(np.trace(cap.c_elastic) / 3)
    k = float(p.get("K_bodies", 0.0))
    rho_b = 1.0 + (k + 1.0) * cbar / w2
    factor = int(p.get("voxels_per_cell", 3))
    rows = []
    for m in p.get("lattice", (4, 6, 8)):
        a = float(m) ** -3
        cfg = _place(a, DensityFunction.constant(k), 1 / 3, 0, None).with_capacitances(cap)
        grid = VoxelGrid(factor * m)
        bg = PotentialField.zero(grid).with_background(rho_b, medium.omega)
        yb = solve_lippmann_schwinger(medium, bg, wave)
        ff_rho = ls_farfield(medium, bg, yb, dirs, wave)
        Y, Q, res, it = solve_hybrid(cfg, bg, medium, wave)
        pts = np.concatenate([grid.centers, cfg.positions])
        src = np.concatenate([grid.h**3 * np.einsum("nij,nj->ni", bg.q, Y), Q])
        ff_h = farfield_from_sources(medium, pts, src, dirs, wave)
        rows.append(
            {
                "a": a,
                "M": cfg.M,
                "grid_n": grid.n,
                "rho": rho_b,
                "rho_only_max": ff_rho.max_norm(),
                "with_bodies_max": ff_h.max_norm(),
                "reduction_ratio": ff_h.max_norm() / ff_rho.max_norm(),
                "iterations": it,
                "residual": res,
            }
        )
    report["discrete"] = rows
    small = sorted(rows, key=lambda r: r["a"])[:2]
    report["reduced_for_two_smallest_a"] = all(r["with_bodies_max"] < r["rho_only_max"] for r in small)
    return report


def _scenario_vanishing(p):
    medium = make_medium(p.get("lam", 1.0), p.get("mu", 1.0), p.get("omega", 1.0))
    s = float(p.get("s", 0.8))
    if not 0 < s < 1:
        raise ScenarioError(f"the vanishing regime needs 0 < s < 1, got s = {s}")
    t = float(p.get("t", 1 / 3))
    wave = p.get("wave") or _default_wave()
    cap = p.get("capacitance") or body_capacitance(p.get("shape", "sphere"), int(p.get("level", 2)), medium.lam, medium.mu)
    a0 = float(p.get("a_start", 2.0**-6))
    halvings = int(p.get("halvings", 4))
    dirs = cube_directions()
    rows = []
    for k in range(halvings + 1):
        a = a0 / 2**k
        part = partition_domain(a, DensityFunction.constant(0.0), s=s)
        cfg = place_scatterers(part, t=t).with_capacitances(cap)
        amps = solve_foldy(cfg, medium, wave)
        ff = foldy_farfield(amps, cfg, medium, dirs, wave)
        rows.append({"a": a, "M": cfg.M, "farfield_max": ff.max_norm(), "residual": amps.residual_norm})
    vals = [r["farfield_max"] for r in rows]
    slope, _, _ = fit_loglog([r["a"] for r in rows], vals)
    return {
        "scenario": "vanishing_s_lt_1",
        "s": s,
        "t": t,
        "rows": rows,
        "strictly_decreasing": all(b < a for a, b in zip(vals, vals[1:])),
        "fitted_slope": slope,
    }


_SCENARIOS = {
    "negative_density": _scenario_negative_density,
    "cloak": _scenario_cloak,
    "vanishing_s_lt_1": _scenario_vanishing,
}


_COMMON_KEYS = {"lam", "mu", "omega", "wave"}
_SCENARIO_KEYS = {
    "negative_density": _COMMON_KEYS | {"rho", "k_plus_1", "c", "n"},
    "cloak": _COMMON_KEYS | {"K", "c", "n", "capacitance", "shape", "level", "K_bodies", "voxels_per_cell", "lattice"},
    "vanishing_s_lt_1": _COMMON_KEYS | {"s", "t", "capacitance", "shape", "level", "a_start", "halvings"},
}


def run_scenario(name: str, params: dict | None = None) -> dict:
    """Run ``negative_density``, ``cloak`` or ``vanishing_s_lt_1``."""
    if name not in _SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(_SCENARIOS)}")
    params = dict(params or {})
    unknown = set(params) - _SCENARIO_KEYS[name]
    if unknown:
        raise ScenarioError(f"unknown parameters for {name}: {sorted(unknown)}; allowed {sorted(_SCENARIO_KEYS[name])}")
    return _SCENARIOS[name](params)
