import json

import numpy as np
import pytest

from elastoscat.distribution import DensityFunction, InfeasibleDistribution
from elastoscat.experiments import (
    ScenarioError,
    SweepSpec,
    amplitude_scaling,
    convergence_sweep,
    farfield_discrepancy,
    fit_loglog,
    run_scenario,
    write_sweep_report,
)

SMALL = dict(a_values=(2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8), ls_levels=(8, 16, 32))


def test_predicted_exponent():
    assert SweepSpec().predicted_exponent == pytest.approx(1 / 3)
    spec = SweepSpec(density=DensityFunction({"type": "constant", "value": 0.0}, 0.2))
    assert spec.predicted_exponent == pytest.approx(0.2)


@pytest.mark.parametrize(
    "kw, err",
    [
        (dict(a_values=(0.01,)), ValueError),
        (dict(a_values=(0.01, 0.02, 0.005, 0.001)), ValueError),
        (dict(t=0.55), ValueError),
        (dict(t=0.2), InfeasibleDistribution),
    ],
)
def test_spec_preconditions(kw, err):
    with pytest.raises(err):
        SweepSpec(**kw)


def test_intermediate_t_warns():
    with pytest.warns(RuntimeWarning):
        SweepSpec(t=0.4)


def test_fit_loglog_exact_power():
    a = np.array([0.1, 0.05, 0.025, 0.0125])
    slope, intercept, res = fit_loglog(a, 3 * a**0.4)
    assert slope == pytest.approx(0.4) and intercept == pytest.approx(np.log(3))
    assert np.abs(res).max() < 1e-12


def test_small_sweep_and_reproducible_outputs(tmp_path, sphere_cap):
    spec = SweepSpec(**SMALL)
    r1 = convergence_sweep(spec, capacitance=sphere_cap)
    assert len(r1.per_a) == 4 and np.all(np.isfinite(r1.errors))
    assert r1.slope > 0.2
    assert r1.reference_order > 1.5
    p1 = write_sweep_report(r1, tmp_path / "one")
    r2 = convergence_sweep(spec, capacitance=sphere_cap)
    p2 = write_sweep_report(r2, tmp_path / "two")
    for key in p1:
        if key != "report":
            assert open(p1[key], "rb").read() == open(p2[key], "rb").read()
    rep = json.loads(open(p1["report"]).read())
    assert {"spec", "per_a", "slope", "intercept", "predicted_exponent"} <= set(rep)
    assert {"a", "M", "d_actual", "e", "runtime_s"} <= set(rep["per_a"][0])


def test_discrepancy_is_zero_on_identical_patterns(sphere_cap):
    r = convergence_sweep(SweepSpec(**SMALL), capacitance=sphere_cap)
    ff = r.farfields[r.spec.a_values[0]]
    assert farfield_discrepancy(ff, ff) == 0.0


def test_amplitudes_scale_like_a(sphere_cap):
    _, slope, _ = amplitude_scaling([2.0**-k for k in range(4, 8)], sphere_cap)
    assert 0.9 <= slope <= 1.1


def test_negative_density_scenario():
    rep = run_scenario("negative_density", {"rho": 1.0, "omega": 1.0, "k_plus_1": 1.0, "c": 2.0, "n": 8})
    assert np.allclose(rep["effective_density"], -np.eye(3))
    assert rep["farfield_max"] > 0
    with pytest.raises(ScenarioError, match="omega"):
        run_scenario("negative_density", {"c": 0.5, "n": 8})


def test_unknown_scenario():
    with pytest.raises(ValueError):
        run_scenario("invisibility")


def test_vanishing_rejects_s_at_least_one():
    with pytest.raises(ScenarioError):
        run_scenario("vanishing_s_lt_1", {"s": 1.0})


def test_unknown_scenario_parameter_rejected():
    with pytest.raises(ScenarioError, match="lattices"):
        run_scenario("cloak", {"lattices": [4]})
