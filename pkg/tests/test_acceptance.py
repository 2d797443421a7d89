"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or directly as a script.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import ortho_group

import conftest
from corpus import bounded_cluster
from elastoscat.capacitance import (
    CapacitanceMatrix,
    acoustic_capacitance,
    elastic_capacitance,
    sphere_capacitance_exact,
)
from elastoscat.distribution import partition_domain, place_scatterers
from elastoscat.effective import PotentialField, VoxelGrid, ls_dense_matrix, ls_farfield, solve_lippmann_schwinger
from elastoscat.experiments import (
    SweepSpec,
    amplitude_scaling,
    body_capacitance,
    convergence_sweep,
    fit_loglog,
    run_scenario,
)
from elastoscat.foldy import (
    ScattererConfiguration,
    cube_directions,
    foldy_farfield,
    amplitude_norm_bound,
    precheck_invertibility,
    solve_foldy,
)
from elastoscat.medium import IncidentPlaneWave, kupradze_tensor, make_medium
from elastoscat.mesh import builtin_mesh, icosphere

LAME_PAIRS = [(1.0, 1.0), (3.0, 0.5), (-0.4, 1.0)]
FLOOR = 1e-13


def report(n, ok, detail, t0):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.perf_counter() - t0:.1f} s)"
    conftest.ACCEPTANCE_LINES.append(line)
    print("\n" + line)
    assert ok, line


@pytest.fixture(scope="module")
def medium():
    return make_medium(1.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def unit_ball():
    c = sphere_capacitance_exact(0.5, 1.0, 1.0)
    return CapacitanceMatrix.scalar(c, 1.0, 1.0, c_acoustic=2 * np.pi)


def test_criterion_01_capacitance_bracket():
    t0 = time.perf_counter()
    meshes = [("sphere", 2), ("sphere", 3), ("sphere", 4), ("cube", 3), ("ellipsoid", 3)]
    worst = -np.inf
    for name, level in meshes:
        mesh = builtin_mesh(name, level)
        for lam, mu in LAME_PAIRS:
            lo, emin, emax, hi = elastic_capacitance(mesh, lam, mu).bracket()
            worst = max(worst, 1 - emin / lo, emax / hi - 1)
    ok = worst <= 0.02 and time.perf_counter() - t0 < 120
    report(1, ok, f"worst signed excursion beyond the bracket {worst:.3e} (<= 2e-2; negative is inside), {len(meshes) * 3} cases", t0)


def test_criterion_02_symmetry_and_rotation():
    t0 = time.perf_counter()
    asym = 0.0
    rot = 0.0
    for name in ("cube", "ellipsoid"):
        mesh = builtin_mesh(name, 2)
        c = elastic_capacitance(mesh, 1.0, 1.0)
        raw = c.raw
        asym = max(asym, np.linalg.norm(raw - raw.T) / np.linalg.norm(raw))
        for k in range(5):
            r = ortho_group.rvs(3, random_state=100 + k)
            cr = elastic_capacitance(mesh.rotated(r), 1.0, 1.0).c_elastic
            ref = r @ c.c_elastic @ r.T
            rot = max(rot, np.linalg.norm(cr - ref) / np.linalg.norm(ref))
    ok = asym <= 1e-8 and rot <= 1e-10 and time.perf_counter() - t0 < 60
    report(2, ok, f"asymmetry {asym:.2e} (<=1e-8), rotation defect {rot:.2e} (<=1e-10)", t0)


def test_criterion_03_scalar_capacitance():
    t0 = time.perf_counter()
    details = []
    ok = True
    for name in ("sphere", "cube"):
        ratios = [elastic_capacitance(builtin_mesh(name, lv), 1.0, 1.0).off_diagonal_ratio() for lv in (2, 3, 4)]
        # ratios already at roundoff cannot decrease meaningfully
        decreasing = all(b < a or b <= FLOOR for a, b in zip(ratios, ratios[1:]))
        ok &= ratios[-1] <= 1e-3 and decreasing
        details.append(f"{name} " + "/".join(f"{r:.1e}" for r in ratios))
    ok &= time.perf_counter() - t0 < 120
    report(3, ok, "off-diagonal ratios levels 2-4: " + ", ".join(details), t0)


def test_criterion_04_acoustic_sphere():
    t0 = time.perf_counter()
    c = acoustic_capacitance(icosphere(3, radius=1.0))
    rel = abs(c - 4 * math.pi) / (4 * math.pi)
    report(4, rel <= 0.01, f"C^a = {c:.6f} vs 4 pi, relative error {rel:.2e} (<=1e-2)", t0)


def test_criterion_05_foldy_correctness(medium, unit_ball):
    t0 = time.perf_counter()
    wave = IncidentPlaneWave.along([0, 0, 1], 1.0, 0.5)
    # one body
    z = np.array([[0.1, -0.2, 0.3]])
    cfg = ScattererConfiguration(z, 0.01).with_capacitances(unit_ball)
    q = solve_foldy(cfg, medium, wave).q[0]
    exact = -unit_ball.c_elastic * 0.01 @ wave.field(medium, z[0])
    e1 = np.abs(q - exact).max() / np.abs(exact).max()
    # two bodies against the explicit 6x6 inverse
    rng = np.random.default_rng(3)
    z = np.array([[0.0, 0.0, 0.0], [0.3, 0.1, -0.2]])
    caps = []
    for _ in range(2):
        b = rng.normal(size=(3, 3))
        caps.append(CapacitanceMatrix(b @ b.T + 3 * np.eye(3), 1.0, 1.0, 1.0))
    cfg = ScattererConfiguration(z, 0.05).with_capacitances(caps)
    B = np.zeros((6, 6), dtype=complex)
    B[:3, :3] = np.linalg.inv(caps[0].c_elastic * 0.05)
    B[3:, 3:] = np.linalg.inv(caps[1].c_elastic * 0.05)
    B[:3, 3:] = kupradze_tensor(medium, z[0], z[1])
    B[3:, :3] = kupradze_tensor(medium, z[1], z[0])
    ref = np.linalg.inv(B) @ (-wave.field(medium, z).ravel())
    e2 = np.linalg.norm(solve_foldy(cfg, medium, wave).q.ravel() - ref) / np.linalg.norm(ref)
    # dense against iterative at 3M = 3000
    cfg = place_scatterers(partition_domain(1e-3), t=1 / 3).with_capacitances(unit_ball)
    d = solve_foldy(cfg, medium, wave, method="dense").q
    it = solve_foldy(cfg, medium, wave, method="iterative").q
    e3 = np.linalg.norm(d - it) / np.linalg.norm(d)
    # norm bound on randomized clusters that pass the precheck
    rng = np.random.default_rng(2024)
    bound_ok = 0
    for _ in range(20):
        c = bounded_cluster(rng, medium)
        assert precheck_invertibility(c, medium).passed
        qq = solve_foldy(c, medium, wave, override_precheck=False).q
        bound_ok += np.sum(np.abs(qq) ** 2) <= amplitude_norm_bound(c, medium, wave)
    ok = e1 <= 1e-14 and e2 <= 1e-12 and e3 <= 1e-8 and bound_ok == 20 and time.perf_counter() - t0 < 180
    report(
        5,
        ok,
        f"M=1 {e1:.1e}, M=2 {e2:.1e}, dense/iterative (3M={3 * cfg.M}) {e3:.1e}, bound holds {bound_ok}/20",
        t0,
    )


def test_criterion_06_farfield_structure(medium, unit_ball):
    t0 = time.perf_counter()
    cfg = place_scatterers(partition_domain(1 / 216), t=1 / 3).with_capacitances(unit_ball)
    x = cube_directions()
    h = np.array([0.31, -0.17, 0.43])
    moved = cfg.translated(h)
    pol = 0.0
    cov = 0.0
    for kind, (al, be) in (("P", (1.0, 0.0)), ("S", (0.0, 1.0)), ("mixed", (0.7, 0.4))):
        w = IncidentPlaneWave.along([0.2, 0.4, -0.9], al, be)
        ff0 = foldy_farfield(solve_foldy(cfg, medium, w), cfg, medium, x)
        ff1 = foldy_farfield(solve_foldy(moved, medium, w), moved, medium, x)
        pol = max(pol, *ff0.polarization_defects(), *ff1.polarization_defects())
        if kind == "mixed":
            continue
        k_in = medium.kappa_p if kind == "P" else medium.kappa_s
        th = np.asarray(w.theta)
        fp = np.exp(1j * (k_in * th - medium.kappa_p * x) @ h)[:, None]
        fs = np.exp(1j * (k_in * th - medium.kappa_s * x) @ h)[:, None]
        scale = max(np.abs(ff0.p_part).max(), np.abs(ff0.s_part).max())
        cov = max(
            cov,
            np.abs(ff1.p_part - fp * ff0.p_part).max() / scale,
            np.abs(ff1.s_part - fs * ff0.s_part).max() / scale,
        )
    # the Lippmann-Schwinger far field obeys the same split
    g = VoxelGrid(8)
    pot = PotentialField.constant(g, 2.0)
    w = IncidentPlaneWave.along([0.0, 0.6, 0.8], 1.0, 0.5)
    ff = ls_farfield(medium, pot, solve_lippmann_schwinger(medium, pot, w), x)
    pol = max(pol, *ff.polarization_defects())
    report(6, pol <= 1e-10 and cov <= 1e-10, f"polarization defect {pol:.1e}, translation covariance {cov:.1e}", t0)


def test_criterion_07_amplitude_scaling(unit_ball):
    t0 = time.perf_counter()
    a = [2.0**-k for k in range(5, 10)]
    qmax, slope, _ = amplitude_scaling(a, unit_ball)
    report(7, 0.9 <= slope <= 1.1, f"slope of max|Q_m| vs a = {slope:.4f} (target [0.9, 1.1])", t0)


def test_criterion_08_lippmann_schwinger(medium):
    t0 = time.perf_counter()
    wave = IncidentPlaneWave.along([0, 0, 1], 1.0, 0.5)
    g = VoxelGrid(8)
    y0 = solve_lippmann_schwinger(medium, PotentialField.zero(g), wave)
    zero_exact = bool(np.array_equal(y0.values, -wave.field(medium, g.centers)))
    ui = -wave.field(medium, g.centers).ravel()
    eps = [1e-2, 1e-3, 1e-4]
    devs = []
    for e in eps:
        pot = PotentialField.constant(g, e)
        A = ls_dense_matrix(medium, pot)
        born = ui - (A - np.eye(A.shape[0])) @ ui
        y = solve_lippmann_schwinger(medium, pot, wave)
        devs.append(np.linalg.norm(y.values.ravel() - born) / np.linalg.norm(born))
    slope, _, _ = fit_loglog(eps, devs)
    pot = PotentialField.constant(g, 3.0).with_background(1.4, medium.omega)
    d = solve_lippmann_schwinger(medium, pot, wave, method="dense").values
    f = solve_lippmann_schwinger(medium, pot, wave).values
    agree = np.linalg.norm(d - f) / np.linalg.norm(d)
    ok = zero_exact and abs(slope - 2) <= 0.3 and agree <= 1e-8
    report(8, ok, f"zero identity {zero_exact}, Born slope {slope:.3f}, dense agreement {agree:.1e} at n=8", t0)


def test_criterion_09_convergence_sweep():
    t0 = time.perf_counter()
    spec = SweepSpec()
    res = convergence_sweep(spec, capacitance=body_capacitance(spec.shape, spec.level))
    viol = res.monotonicity_violations()
    ms = max(r["M"] for r in res.per_a)
    ok = res.slope >= 0.25 and len(viol) <= 1 and time.perf_counter() - t0 < 900
    errs = ", ".join(f"{e:.2e}" for e in res.errors)
    report(
        9,
        ok,
        f"slope {res.slope:.3f} (>=0.25, predicted {spec.predicted_exponent:.3f}), "
        f"violations {len(viol)}, M up to {ms}, e(a) = [{errs}]",
        t0,
    )


def test_criterion_10_cloak():
    t0 = time.perf_counter()
    rep = run_scenario("cloak", {})
    null = rep["exact_null"]["cloaked_max"]
    ratios = ", ".join(f"{r['reduction_ratio']:.3f}" for r in rep["discrete"])
    ok = null <= 1e-10 and rep["reduced_for_two_smallest_a"]
    report(10, ok, f"exact-null far field {null:.1e}, discrete reduction ratios [{ratios}]", t0)


def test_criterion_11_vanishing():
    t0 = time.perf_counter()
    rep = run_scenario("vanishing_s_lt_1", {"s": 0.8})
    vals = ", ".join(f"{r['farfield_max']:.4f}" for r in rep["rows"])
    ok = rep["strictly_decreasing"] and len(rep["rows"]) >= 5
    report(11, ok, f"max|U^inf| over halvings of a: [{vals}]", t0)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
