"""Foldy far fields approach the homogenized Lippmann-Schwinger far field.

A short sweep (pass ``--full`` for a = 2^-6 .. 2^-12, about a minute) compares
the discrete far field at each a against a Richardson-extrapolated volume
solution and fits the observed rate.
"""

import sys

from elastoscat.experiments import SweepSpec, body_capacitance, convergence_sweep

full = "--full" in sys.argv
if full:
    spec = SweepSpec()
else:
    spec = SweepSpec(a_values=tuple(2.0**-k for k in range(5, 10)), ls_levels=(8, 16, 32))

cap = body_capacitance(spec.shape, spec.level)
result = convergence_sweep(spec, capacitance=cap, progress=lambda row: print(f"  a = {row['a']:.3e} done ({row['runtime_s']:.1f} s)"))

print(f"\n{'a':>10}{'M':>7}{'e(a)':>12}")
for row in result.per_a:
    print(f"{row['a']:>10.3e}{row['M']:>7}{row['e']:>12.3e}")
print(f"\nfitted slope {result.slope:.3f}; predicted lower bound {spec.predicted_exponent:.3f}")
print(f"reference extrapolation order {result.reference_order:.2f}")
