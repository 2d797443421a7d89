"""Elastic capacitance of a few reference bodies.

For every body the three eigenvalues of the elastic capacitance sit between
mu C^a and (lambda + 2 mu) C^a, where C^a is the acoustic capacitance of the
same surface.  Spheres are the special case where the matrix is a multiple of
the identity, which the last column makes visible.
"""

from elastoscat.capacitance import elastic_capacitance, sphere_capacitance_exact
from elastoscat.mesh import builtin_mesh

LAM, MU = 1.0, 1.0

print(f"{'body':<12}{'tris':>6}{'mu C^a':>10}{'eig min':>10}{'eig max':>10}{'(l+2m)C^a':>11}{'off/diag':>10}")
for name, level in [("sphere", 2), ("sphere", 3), ("cube", 3), ("ellipsoid", 3)]:
    cap = elastic_capacitance(builtin_mesh(name, level), LAM, MU)
    lo, emin, emax, hi = cap.bracket()
    label = f"{name}/{level}"
    print(f"{label:<12}{cap.n_triangles:>6}{lo:>10.4f}{emin:>10.4f}{emax:>10.4f}{hi:>11.4f}{cap.off_diagonal_ratio():>10.1e}")

# the ball has a closed form; the mesh value converges to it from below
exact = sphere_capacitance_exact(0.5, LAM, MU)
cap = elastic_capacitance(builtin_mesh("sphere", 3), LAM, MU)
print(f"\nunit-diameter ball: closed form {exact:.5f}, level-3 mesh {cap.c_elastic[0, 0]:.5f}")
