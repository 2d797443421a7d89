import numpy as np
import pytest

from elastoscat.kernels import apply_kupradze, kernel_params
from elastoscat.medium import kupradze_tensor, make_medium


@pytest.mark.parametrize("omega", [0.0, 0.3, 1.0, 4.0])
def test_matches_dense_kernel(omega, rng):
    m = make_medium(1.2, 0.9, omega)
    x = rng.uniform(-0.5, 0.5, (40, 3))
    # a tight cluster exercises the small-argument series branch
    y = np.concatenate([rng.uniform(-0.5, 0.5, (30, 3)), 0.3 + 0.01 * rng.random((30, 3))])
    q = rng.normal(size=(60, 3)) + 1j * rng.normal(size=(60, 3))
    ref = np.einsum("ijab,jb->ia", kupradze_tensor(m, x[:, None], y[None]), q)
    out = apply_kupradze(kernel_params(m), x, y, q)
    assert np.abs(out - ref).max() < 1e-12 * np.abs(ref).max()


def test_same_skips_diagonal_and_near_value(medium, rng):
    z = rng.uniform(-0.5, 0.5, (25, 3))
    q = rng.normal(size=(25, 3)) + 0j
    p = kernel_params(medium)
    full = apply_kupradze(p, z, z, q, same=True)
    i, j = np.nonzero(~np.eye(25, dtype=bool))
    G = np.zeros((25, 25, 3, 3), dtype=complex)
    G[i, j] = kupradze_tensor(medium, z[i], z[j])
    assert np.allclose(full, np.einsum("ijab,jb->ia", G, q), rtol=0, atol=1e-12)
    nv = np.diag([1.0, 2.0, 3.0])
    out = apply_kupradze(p, z, z, q, near_radius=1e-9, near_value=nv)
    assert np.allclose(out, full + q @ nv.T, atol=1e-12)
