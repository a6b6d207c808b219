"""Dense moment relaxations of polynomial optimization problems.

Given a POP

    min p(x)  subject to  h_i(x) = 0,  g_j(x) >= 0,

the order-r relaxation replaces monomials by pseudo-expectations: one PSD
moment matrix indexed by the monomial basis [x]_r, consistency rows tying
every repeated monomial entry together (plus the top-left entry pinned to 1),
redundant equality rows h_i * x^beta for every monomial budgetwise allowed,
and one PSD localizing block per inequality linked entrywise to the moment
matrix. The optimal value lower-bounds the POP optimum, and the bound is
nondecreasing in r.

Also provides a sum-of-squares membership test for a single polynomial via
the Gram-matrix feasibility SDP, decided through the smallest diagonal shift
that makes a coefficient-exact Gram matrix PSD.
"""

from __future__ import annotations

import math

import numpy as np

from . import poly as P
from . import sdp as S
from .errors import DimensionMismatch, RelaxationOrderError, StructuralError

MOMENT_ONE_TOL = 1e-7
MOMENT_AGREE_TOL = 1e-6


class Pop:
    """A polynomial optimization problem over d variables.

    Args:
        objective: Polynomial to minimize.
        equalities: polynomials constrained to zero.
        inequalities: polynomials constrained nonnegative.
        ball_bound: optional M^2; when given, the explicit ball constraint
            M^2 - ||x||^2 >= 0 is appended to the inequalities.

    Convergence theory for the relaxation hierarchy assumes the feasible set
    carries an explicit ball constraint; ``with_ball`` adds one after the
    fact when the natural formulation lacks it.
    """

    __slots__ = ("objective", "equalities", "inequalities", "nvars")

    def __init__(self, objective, equalities=(), inequalities=(), ball_bound=None):
        self.objective = objective
        self.nvars = objective.nvars
        eqs = list(equalities)
        ineqs = list(inequalities)
        for q in eqs + ineqs:
            if q.nvars != self.nvars:
                raise DimensionMismatch(
                    f"constraint over {q.nvars} variables in a "
                    f"{self.nvars}-variable problem"
                )
        if ball_bound is not None:
            ineqs.append(_ball(self.nvars, float(ball_bound)))
        self.equalities = tuple(eqs)
        self.inequalities = tuple(ineqs)

    def with_ball(self, bound_sq):
        return Pop(
            self.objective,
            self.equalities,
            self.inequalities,
            ball_bound=bound_sq,
        )

    def max_degree(self):
        degs = [self.objective.degree]
        degs += [h.degree for h in self.equalities]
        degs += [g.degree for g in self.inequalities]
        return max(degs)

    def __repr__(self):
        return (
            f"Pop(nvars={self.nvars}, deg={self.max_degree()}, "
            f"eq={len(self.equalities)}, ineq={len(self.inequalities)})"
        )


def _ball(nvars, bound_sq):
    terms = {P.Monomial((0,) * nvars): bound_sq}
    for k in range(nvars):
        e = [0] * nvars
        e[k] = 2
        terms[P.Monomial(e)] = -1.0
    return P.Polynomial(terms, nvars=nvars)


class MomentRelaxation(S.MultiBlockSdp):
    """The order-r moment relaxation of a Pop, as a solvable multi-block SDP.

    Block 0 is the moment matrix over ``self.basis``; each inequality owns
    one localizing block, recorded in ``self.localizers`` as tuples
    (polynomial, sub-basis, block index). ``self.cells`` maps each monomial
    of degree <= 2r to its canonical moment-matrix cell: the split with the
    lowest-degree row monomial, ties broken graded-lexicographically.
    """

    def __init__(self, pop: Pop, r: int, schmudgen: bool = False):
        self.pop = pop
        self.r = int(r)
        d = pop.nvars
        if self.r < 0:
            raise RelaxationOrderError("relaxation order must be nonnegative")
        worst = pop.max_degree()
        if 2 * self.r < worst:
            raise RelaxationOrderError(
                f"order {self.r} too small: a polynomial of degree {worst} "
                f"needs 2r >= {worst}",
                offending_degree=worst,
            )
        self.basis = P.basis(d, self.r)
        s0 = len(self.basis)

        localizing = list(pop.inequalities)
        if schmudgen:
            localizing += _set_products(pop.inequalities, 2 * self.r)
        sides = []
        sub_bases = []
        for g in localizing:
            u = self.r - math.ceil(g.degree / 2)
            if u < 0:
                raise RelaxationOrderError(
                    f"order {self.r} too small for an inequality of degree "
                    f"{g.degree}",
                    offending_degree=g.degree,
                )
            sub = P.basis(d, u)
            sides.append(len(sub))
            sub_bases.append(sub)

        order = sorted(range(len(localizing)), key=lambda k: (-sides[k], k))
        super().__init__([s0] + [sides[k] for k in order])
        self.localizers = [
            (localizing[k], sub_bases[k], 1 + pos) for pos, k in enumerate(order)
        ]

        # Canonical cell per monomial and the duplicate-cell classes.
        self.cells = {}
        classes = {}
        for i, alpha in enumerate(self.basis):
            for j in range(i, s0):
                gamma = alpha * self.basis[j]
                classes.setdefault(gamma, []).append((i, j))
        for gamma, cls in classes.items():
            cls.sort(key=lambda ij: (ij[0], ij[1]))
            self.cells[gamma] = cls[0]

        one = P.Monomial((0,) * d)
        row = self.new_row(1.0)
        self.add_entry(row, 0, 0, 0, 1.0)
        self.num_consistency_rows = 1
        for gamma in sorted(classes):
            anchor = self.cells[gamma]
            for cell in classes[gamma]:
                if cell == anchor:
                    continue
                row = self.new_row(0.0)
                self.add_entry(row, 0, cell[0], cell[1], 1.0)
                self.add_entry(row, 0, anchor[0], anchor[1], -1.0)
                self.num_consistency_rows += 1

        self.num_redundant_rows = []
        for h in pop.equalities:
            budget = 2 * self.r - h.degree
            count = 0
            for beta in P.basis(d, budget):
                row = self.new_row(0.0)
                for mono, coeff in h.terms.items():
                    ci, cj = self.cells[mono * beta]
                    self.add_entry(row, 0, ci, cj, coeff)
                count += 1
            self.num_redundant_rows.append(count)

        for g, sub, blk in self.localizers:
            su = len(sub)
            for a in range(su):
                for b in range(a, su):
                    pair = sub[a] * sub[b]
                    row = self.new_row(0.0)
                    self.add_entry(row, blk, a, b, 1.0)
                    for mono, coeff in g.terms.items():
                        ci, cj = self.cells[mono * pair]
                        self.add_entry(row, 0, ci, cj, -coeff)

        for mono, coeff in pop.objective.terms.items():
            ci, cj = self.cells[mono]
            self.set_cost(0, ci, cj, coeff)

    def rank_one(self, point):
        """Assemble the full block list a feasible point induces.

        The moment block is v v' for v the basis evaluated at the point, and
        each localizing block is g(point) times the corresponding sub-basis
        outer product. Every constraint row is satisfied exactly on these.
        """
        z = np.asarray(point, dtype=float)
        if z.shape != (self.pop.nvars,):
            raise DimensionMismatch(
                f"point of shape {z.shape} for {self.pop.nvars} variables"
            )
        blocks = [None] * len(self.blocks)
        v = np.array([_mono_eval(m, z) for m in self.basis])
        blocks[0] = np.outer(v, v)
        for g, sub, blk in self.localizers:
            w = np.array([_mono_eval(m, z) for m in sub])
            blocks[blk] = P.eval(g, z) * np.outer(w, w)
        return blocks

    def pseudo_moment(self, solution: S.SdpSolution):
        return PseudoMomentMatrix(solution.X[0], self.basis, self.r)


def _mono_eval(mono, z):
    v = 1.0
    for k, e in enumerate(mono):
        if e:
            v *= z[k] ** e
    return v


def _set_products(gs, max_degree):
    """Products of every subset of size >= 2 whose degree fits the budget."""
    out = []
    n = len(gs)
    for mask in range(1, 1 << n):
        if mask & (mask - 1) == 0:
            continue
        prod = None
        for k in range(n):
            if mask >> k & 1:
                prod = gs[k] if prod is None else P.mul(prod, gs[k])
        if prod.degree <= max_degree:
            out.append(prod)
    return out


class PseudoMomentMatrix:
    """A solved moment matrix with its indexing basis and order."""

    __slots__ = ("X", "basis", "r")

    def __init__(self, X, basis, r):
        self.X = np.asarray(X, dtype=float)
        self.basis = basis
        self.r = int(r)
        s = len(basis)
        if self.X.shape != (s, s):
            raise DimensionMismatch(
                f"moment matrix of shape {self.X.shape} for a basis of {s}"
            )

    def validate(self, tol_psd=S.PSD_CLAMP_TOL):
        """Check the pseudo-moment invariants; raises StructuralError."""
        if abs(self.X[0, 0] - 1.0) > MOMENT_ONE_TOL:
            raise StructuralError(
                f"top-left moment entry is {self.X[0, 0]!r}, expected 1"
            )
        if np.linalg.eigvalsh(0.5 * (self.X + self.X.T)).min() < -tol_psd:
            raise StructuralError("moment matrix is not PSD within tolerance")
        groups = {}
        for i, alpha in enumerate(self.basis):
            for j in range(i, len(self.basis)):
                groups.setdefault(alpha * self.basis[j], []).append(self.X[i, j])
        for gamma, vals in groups.items():
            lo, hi = min(vals), max(vals)
            if hi - lo > MOMENT_AGREE_TOL * max(1.0, abs(hi), abs(lo)):
                raise StructuralError(
                    f"inconsistent entries for monomial {tuple(gamma)}: "
                    f"spread {hi - lo:g}"
                )
        return self

    def eigratio(self):
        """(lambda_1, lambda_2, ratio) for rank-one diagnostics."""
        vals = np.linalg.eigvalsh(0.5 * (self.X + self.X.T))
        top, second = float(vals[-1]), float(vals[-2]) if len(vals) > 1 else 0.0
        ratio = math.inf if second <= 0 else top / second
        return top, second, ratio


def canonical_cell(basis_r, mono):
    """Canonical (row, col) split of a monomial in a moment matrix."""
    for i, alpha in enumerate(basis_r):
        rest = tuple(m - a for m, a in zip(mono, alpha))
        if any(e < 0 for e in rest):
            continue
        beta = P.Monomial(rest)
        if beta in basis_r:
            return i, basis_r.index(beta)
    raise RelaxationOrderError(
        f"monomial of degree {sum(mono)} does not fit order {basis_r.degree}",
        offending_degree=sum(mono),
    )


def extract(X: PseudoMomentMatrix, mono) -> float:
    """Pseudo-expectation of one monomial from its canonical cell."""
    m = mono if isinstance(mono, P.Monomial) else P.Monomial(mono)
    if m.degree > 2 * X.r:
        raise RelaxationOrderError(
            f"monomial degree {m.degree} exceeds 2r = {2 * X.r}",
            offending_degree=m.degree,
        )
    i, j = canonical_cell(X.basis, m)
    return float(X.X[i, j])


def build_relaxation(pop: Pop, r: int, schmudgen: bool = False) -> MomentRelaxation:
    """Order-r moment relaxation of a POP as a multi-block SDP.

    Row layout: the pinned top-left entry, then one agreement row per
    duplicated moment cell, then the redundant equality rows h_i * x^beta,
    then the entrywise links of each localizing block. Raises
    RelaxationOrderError when 2r cannot cover some polynomial's degree.
    Set-product (Schmudgen-style) localizers are off by default; with an
    explicit ball constraint they add blocks without adding convergence.
    """
    return MomentRelaxation(pop, r, schmudgen=schmudgen)


def pop_lower_bound(pop: Pop, r: int, tol: float = 1e-7, max_iter: int = 100_000):
    """Solve the order-r relaxation; returns (m_star, PseudoMomentMatrix).

    m_star lower-bounds the POP optimum up to solver slack. The returned
    moment matrix satisfies the pseudo-moment invariants (validated) when
    the solve converged.
    """
    relax = build_relaxation(pop, r)
    sol = S.solve(relax, tol=tol, max_iter=max_iter)
    pm = relax.pseudo_moment(sol)
    if sol.status == "Optimal":
        pm.validate()
    return float(sol.objective), pm


class SosResult:
    """Outcome of an SOS membership test; truthy exactly when SOS."""

    __slots__ = ("is_sos", "gram", "basis", "reason", "shift")

    def __init__(self, is_sos, gram=None, basis=None, reason=None, shift=None):
        self.is_sos = bool(is_sos)
        self.gram = gram
        self.basis = basis
        self.reason = reason
        self.shift = shift

    def __bool__(self):
        return self.is_sos

    def __repr__(self):
        tag = "Yes" if self.is_sos else f"No({self.reason})"
        return f"SosResult({tag})"


def is_sos(p: P.Polynomial, tol: float = 1e-6, max_iter: int = 100_000) -> SosResult:
    """Decide whether p is a sum of squares.

    Searches for a PSD Gram matrix G over basis(d, deg/2) reproducing p's
    coefficients, by minimizing the diagonal shift s >= 0 such that some
    coefficient-exact Gram matrix plus s*I is PSD. A zero optimal shift
    (within tol) certifies membership and the Gram matrix is returned;
    odd-degree input is refused outright.
    """
    if p.degree % 2 != 0:
        return SosResult(False, reason=f"odd degree {p.degree}")
    if not p.terms:
        return SosResult(
            True,
            gram=np.zeros((1, 1)),
            basis=P.basis(p.nvars, 0),
            shift=0.0,
        )
    half = p.degree // 2
    w = P.basis(p.nvars, half)
    s = len(w)

    prog = S.MultiBlockSdp([s, 1])
    prog.set_cost(1, 0, 0, 1.0)

    pair_cells = {}
    diag_count = {}
    for i in range(s):
        for j in range(i, s):
            gamma = w[i] * w[j]
            pair_cells.setdefault(gamma, []).append((i, j))
            if i == j:
                diag_count[gamma] = diag_count.get(gamma, 0) + 1

    for gamma, cls in pair_cells.items():
        row = prog.new_row(p.coefficient(gamma))
        for i, j in cls:
            prog.add_entry(row, 0, i, j, 1.0 if i == j else 2.0)
        shifted = diag_count.get(gamma, 0)
        if shifted:
            prog.add_entry(row, 1, 0, 0, -float(shifted))

    sol = S.solve(prog, tol=min(tol, 1e-7), max_iter=max_iter)
    if sol.status == "Infeasible":
        return SosResult(False, reason="no coefficient-consistent Gram matrix")
    shift = float(sol.X[1][0, 0])
    gram = sol.X[0] - shift * np.eye(s)

    resid = _gram_residual(p, gram, w)
    budget = tol * (1.0 + p.l1_norm())
    if sol.status != "Optimal":
        return SosResult(
            False, reason=f"solver stopped at {sol.status}", shift=shift
        )
    if shift > tol:
        return SosResult(
            False,
            reason=f"needs diagonal shift {shift:.3g} to reach the PSD cone",
            shift=shift,
        )
    if resid > budget:
        return SosResult(
            False, reason=f"coefficient residual {resid:.3g}", shift=shift
        )
    return SosResult(True, gram=gram, basis=w, shift=shift)


def _gram_residual(p, gram, w):
    """Max coefficient mismatch between p and the polynomial of a Gram matrix."""
    s = len(w)
    coeffs = {}
    for i in range(s):
        for j in range(s):
            gamma = w[i] * w[j]
            coeffs[gamma] = coeffs.get(gamma, 0.0) + gram[i, j]
    worst = 0.0
    for gamma in set(coeffs) | set(p.terms):
        worst = max(worst, abs(coeffs.get(gamma, 0.0) - p.coefficient(gamma)))
    return worst
