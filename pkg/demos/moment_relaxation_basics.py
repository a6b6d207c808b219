"""
Moment relaxations on a polynomial you can eyeball
==================================================

The machinery behind every estimator here is a generic moment relaxation:
replace monomials with entries of a positive semidefinite matrix and
minimize a linear functional. On a one-dimensional cubic the whole
construction fits on a screen.
"""

import numpy as np

from rotcert import poly as P
from rotcert.moment import Pop, build_relaxation, pop_lower_bound

x = P.variables(1)[0]

# minimize x^3 - x on [-1, 1]; the minimum sits at x = 1/sqrt(3)
pop = Pop(x * x * x - x, inequalities=[1.0 - x * x])
m_star, pm = pop_lower_bound(pop, r=2)
argmin = 1.0 / np.sqrt(3.0)
print(f"relaxation value: {m_star:.6f}")
print(f"true minimum:     {argmin**3 - argmin:.6f}")

# The pseudo-moment matrix is rank one exactly when the relaxation is
# tight, and its second row then reads off the minimizer.
print(f"moment matrix eigenvalue ratio: {pm.eigratio()[2]:.1e}")
print(f"recovered minimizer: {pm.X[0, 1]:.6f} (true {argmin:.6f})")

# Any feasible point lifts to a matrix satisfying every constraint row;
# that is the structural invariant the relaxation is built on.
relax = build_relaxation(pop, r=2)
amat, bvec, _ = relax.compile()
vec = relax.stack(relax.rank_one(np.array([0.25])))
print(f"max constraint violation of a lifted point: "
      f"{np.abs(amat @ vec - bvec).max():.1e}")
