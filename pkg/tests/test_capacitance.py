import math

import numpy as np
import pytest
from scipy.stats import ortho_group

from elastoscat.capacitance import (
    CapacitanceCache,
    CapacitanceMatrix,
    acoustic_capacitance,
    conjugate_capacitance,
    elastic_capacitance,
    richardson,
    sphere_capacitance_exact,
)
from elastoscat.mesh import builtin_mesh, icosphere


def test_sphere_exact_formula_limits():
    # lambda -> infinity leaves the shear part only: 12 pi R mu / 2
    assert sphere_capacitance_exact(1.0, 1e12, 1.0) == pytest.approx(6 * math.pi, rel=1e-9)
    assert sphere_capacitance_exact(0.5, 1.0, 1.0) == pytest.approx(18 * math.pi / 7)


def test_acoustic_sphere_second_order():
    exact = 4 * math.pi
    errs = [abs(acoustic_capacitance(icosphere(lv)) - exact) for lv in (1, 2, 3)]
    assert errs[-1] / exact < 0.005
    assert errs[1] / errs[2] > 3.0


def test_elastic_sphere_converges_to_exact():
    exact = sphere_capacitance_exact(0.5, 1.0, 1.0)
    errs = [abs(elastic_capacitance(builtin_mesh("sphere", lv), 1.0, 1.0).c_elastic[0, 0] - exact) / exact for lv in (2, 3)]
    assert errs[1] < 0.005
    assert errs[0] / errs[1] > 3.0


def test_error_estimate_and_symmetry():
    c = elastic_capacitance(builtin_mesh("ellipsoid", 2), 2.0, 0.5)
    assert c.asymmetry < 1e-12
    assert 0 < c.err_estimate < 1e-3
    assert np.allclose(c.c_elastic, c.c_elastic.T)


def test_scaling_with_diameter():
    m = builtin_mesh("cube", 2)
    c1 = elastic_capacitance(m, 1.0, 1.0)
    c3 = elastic_capacitance(m.scaled(3.0), 1.0, 1.0)
    assert np.abs(c3.absolute - 3 * c1.absolute).max() < 1e-12 * np.abs(c1.absolute).max() * 3
    assert np.allclose(c3.c_elastic, c1.c_elastic, rtol=1e-12)


def test_translation_invariance():
    m = builtin_mesh("ellipsoid", 2)
    c1 = elastic_capacitance(m, 1.0, 1.0)
    c2 = elastic_capacitance(m.translated([3.0, -1.0, 2.0]), 1.0, 1.0)
    assert np.abs(c1.c_elastic - c2.c_elastic).max() < 1e-10 * np.abs(c1.c_elastic).max()


def test_iterative_path_matches_direct():
    m = builtin_mesh("ellipsoid", 2)
    direct = elastic_capacitance(m, 1.0, 1.0)
    it = elastic_capacitance(m, 1.0, 1.0, direct_limit=0)
    assert it.solver.startswith("gmres")
    assert np.abs(it.c_elastic - direct.c_elastic).max() < 1e-9 * np.abs(direct.c_elastic).max()


def test_conjugate_capacitance():
    c = elastic_capacitance(builtin_mesh("ellipsoid", 2), 1.0, 1.0)
    r = ortho_group.rvs(3, random_state=5)
    rc = conjugate_capacitance(c, r)
    assert np.allclose(rc.c_elastic, r @ c.c_elastic @ r.T)
    assert np.allclose(np.sort(rc.eigenvalues), np.sort(c.eigenvalues))
    with pytest.raises(ValueError):
        conjugate_capacitance(c, 1.01 * np.eye(3))


def test_invalid_lame_pair_rejected():
    with pytest.raises(ValueError):
        elastic_capacitance(builtin_mesh("sphere", 1), -1.0, 1.0)


def test_record_roundtrip_and_cache(tmp_path):
    m = builtin_mesh("sphere", 2)
    cache = CapacitanceCache(tmp_path)
    c, hit = cache.get_or_compute(m, 1.0, 1.0)
    assert not hit
    c2, hit2 = cache.get_or_compute(m, 1.0, 1.0)
    assert hit2
    assert np.array_equal(c.c_elastic, c2.c_elastic)
    assert c2.c_acoustic == c.c_acoustic
    back = CapacitanceMatrix.from_record(c.to_record())
    assert np.array_equal(back.c_elastic, c.c_elastic)


def test_richardson_recovers_polynomial_limit():
    hs = [0.4, 0.2, 0.1]
    vals = [3.0 + 2.0 * h**2 for h in hs]
    limit, order = richardson(vals, hs)
    assert limit == pytest.approx(3.0, abs=1e-12)
    assert order == pytest.approx(2.0)
