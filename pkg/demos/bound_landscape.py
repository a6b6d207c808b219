"""
What the a-priori bounds promise, and where they stop
=====================================================

The closed-form error bounds need nothing from the data beyond the checked
statistics; in exchange they only exist in restricted regimes. This script
maps those regimes: the low-outlier bound as the inlier rate alpha drops
toward one half, and the trimmed-objective coefficients as the outlier
rate climbs toward its tiny ceiling.
"""

from rotcert import emit_bound_curves
from rotcert.certify import (
    apriori_bound_lts_mc,
    eta_threshold,
    lts_objective_coeffs,
)
from rotcert.errors import OutOfRegime

# The low-outlier bound beats the trivial bound 2*M_x only when eta stays
# under a threshold that shrinks as outliers multiply.
print("inlier rate -> largest usable eta")
for alpha in (0.55, 0.6, 0.7, 0.8, 1.0):
    print(f"  alpha={alpha:.2f}: eta < {eta_threshold(alpha):.4f}")

# At alpha = 1 and a tiny eta the bound collapses toward zero.
print(f"bound at alpha=1, eta=0.01, M_x=1: "
      f"{apriori_bound_lts_mc(1.0, 0.01, 1.0):.4f}")

# The trimmed-objective route tolerates only vanishing outlier rates: with
# fourth-moment control at C=6 the ceiling is 1/12288.
c1, c2, beta_max = lts_objective_coeffs(4, 0.00005, 6.0)
print(f"k=4, C=6, beta=5e-5: C1={c1:.4f}, C2={c2:.4f}, beta_max={beta_max:.3e}")
try:
    lts_objective_coeffs(4, 0.001, 6.0)
except OutOfRegime as exc:
    print(f"beta=1e-3 is out of regime: {exc}")

# Full curves land in a CSV for plotting.
emit_bound_curves("bound_curves.csv")
print("wrote bound_curves.csv")
