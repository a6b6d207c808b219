"""
Checking when the data itself supports a guarantee
==================================================

The a-priori error bounds only apply to measurement sets whose sensing
matrices are certifiably well behaved. Both properties reduce to small
sum-of-squares programs, so they can be checked numerically on the actual
data before trusting any bound built on top of them.
"""

import time

from rotcert import (
    AntiConParams,
    HyperParams,
    check_anticoncentration,
    check_hypercontractivity,
    generate_instance,
)
from rotcert.geometry import generate_triplet_set, wahba_matrix

# --- hypercontractivity: do fourth moments grow no faster than C times
#     the squared second moment, uniformly over directions?
inst = generate_instance(60, 0.0, seed=0)
mats = [wahba_matrix(m) for m in inst.measurements]
for c2 in (1.0, 6.0):
    t0 = time.perf_counter()
    res = check_hypercontractivity(mats, HyperParams(k=4, C_t_pow_t=c2))
    verdict = "Holds" if res else "Fails"
    print(f"hypercontractivity at C={c2:g}: {verdict} "
          f"({time.perf_counter() - t0:.2f}s)")

# --- anti-concentration: can the residual along any direction collapse to
#     zero on too many measurements at once? Plain direction pairs fail
#     this (each sensing matrix has a 6-dimensional kernel); orthonormal
#     triplets pass because their stacked matrices are full rank.
triplets = [t.stack() for t in generate_triplet_set(20, seed=0)]
params = AntiConParams.for_wahba(0.9, 3.75)
t0 = time.perf_counter()
res = check_anticoncentration(triplets, params)
verdict = "Holds" if res else f"Fails (condition {res.failed_condition})"
print(f"anti-concentration, triplet set: {verdict} "
      f"({time.perf_counter() - t0:.1f}s)")

plain = [wahba_matrix(m) for m in inst.measurements[:20]]
res = check_anticoncentration(plain, AntiConParams.for_wahba(0.55, 1.32))
verdict = "Holds" if res else f"Fails (condition {res.failed_condition})"
print(f"anti-concentration, plain pairs: {verdict}")
