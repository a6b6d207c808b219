"""Sparse multivariate polynomials over exponent tuples.

A monomial x^alpha is stored as its exponent vector alpha, and a polynomial
as a map from monomials to real coefficients. Monomials carry a graded
lexicographic total order: lower total degree first, and within one degree
the variable with the smallest index dominates, so that

    basis(2, 2) == [1, x1, x2, x1^2, x1*x2, x2^2].

Every monomial basis and moment matrix in the package inherits this order.
Coefficients are doubles; only exact zeros are pruned, which keeps the
algebra deterministic across platforms.
"""

from __future__ import annotations

import math
from itertools import combinations_with_replacement

import numpy as np

from .errors import DimensionMismatch


class Monomial(tuple):
    """Exponent vector of a single monomial x^alpha.

    Behaves as an immutable tuple of nonnegative integers. Comparison is
    graded lexicographic as described in the module docstring; ``m1 * m2``
    adds exponents (never tuple repetition).
    """

    __slots__ = ()

    def __new__(cls, exponents):
        exps = tuple(int(e) for e in exponents)
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {exps}")
        return super().__new__(cls, exps)

    @property
    def degree(self):
        return sum(self)

    def _key(self):
        return (sum(self), tuple(-e for e in self))

    def __lt__(self, other):
        return self._key() < Monomial(other)._key()

    def __le__(self, other):
        return self._key() <= Monomial(other)._key()

    def __gt__(self, other):
        return self._key() > Monomial(other)._key()

    def __ge__(self, other):
        return self._key() >= Monomial(other)._key()

    def __mul__(self, other):
        if len(self) != len(other):
            raise DimensionMismatch(
                f"monomials over {len(self)} and {len(other)} variables"
            )
        return Monomial(a + b for a, b in zip(self, other))

    def __repr__(self):
        return f"Monomial{tuple(self)!r}"


def _format_term(coeff, mono):
    vars_part = "*".join(
        f"x{k + 1}" if e == 1 else f"x{k + 1}^{e}"
        for k, e in enumerate(mono)
        if e > 0
    )
    if not vars_part:
        return f"{coeff:g}"
    if coeff == 1:
        return vars_part
    if coeff == -1:
        return f"-{vars_part}"
    return f"{coeff:g}*{vars_part}"


class Polynomial:
    """A finite sum of real-coefficient monomials in a fixed variable count.

    Parameters
    ----------
    terms : mapping from exponent tuple (or Monomial) to float
    nvars : number of variables; inferred from the terms when omitted

    Zero-coefficient entries are dropped on construction. Instances are
    treated as immutable; all arithmetic returns new objects.
    """

    __slots__ = ("terms", "nvars")

    def __init__(self, terms, nvars=None):
        clean = {}
        for mono, coeff in terms.items():
            m = mono if isinstance(mono, Monomial) else Monomial(mono)
            if nvars is None:
                nvars = len(m)
            elif len(m) != nvars:
                raise DimensionMismatch(
                    f"term over {len(m)} variables in a {nvars}-variable polynomial"
                )
            c = float(coeff)
            if c != 0.0:
                clean[m] = clean.get(m, 0.0) + c
        if nvars is None:
            raise ValueError("cannot infer nvars from an empty term map")
        self.terms = {m: c for m, c in clean.items() if c != 0.0}
        self.nvars = int(nvars)

    @classmethod
    def zero(cls, nvars):
        return cls({}, nvars=nvars)

    @classmethod
    def constant(cls, value, nvars):
        return cls({Monomial((0,) * nvars): value}, nvars=nvars)

    @property
    def degree(self):
        """Largest total degree among stored terms; 0 for the zero polynomial."""
        return max((m.degree for m in self.terms), default=0)

    def coefficient(self, mono):
        m = mono if isinstance(mono, Monomial) else Monomial(mono)
        return self.terms.get(m, 0.0)

    def l1_norm(self):
        return sum(abs(c) for c in self.terms.values())

    def __add__(self, other):
        if np.isscalar(other):
            other = Polynomial.constant(float(other), self.nvars)
        if self.nvars != other.nvars:
            raise DimensionMismatch(
                f"adding polynomials over {self.nvars} and {other.nvars} variables"
            )
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial(out, nvars=self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self.terms.items()}, nvars=self.nvars)

    def __sub__(self, other):
        if np.isscalar(other):
            other = Polynomial.constant(float(other), self.nvars)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return Polynomial(
                {m: float(other) * c for m, c in self.terms.items()},
                nvars=self.nvars,
            )
        return mul(self, other)

    __rmul__ = __mul__

    def __eq__(self, other):
        return (
            isinstance(other, Polynomial)
            and self.nvars == other.nvars
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __call__(self, point):
        return eval(self, point)

    def __repr__(self):
        return f"Polynomial({self})"

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        display_order = sorted(
            self.terms, key=lambda m: (-m.degree, tuple(-e for e in m))
        )
        for mono in display_order:
            text = _format_term(self.terms[mono], mono)
            if parts:
                parts.append(f"- {text[1:]}" if text.startswith("-") else f"+ {text}")
            else:
                parts.append(text)
        return " ".join(parts)


def variable(k, nvars):
    """The polynomial x_{k+1} (0-based index k) over nvars variables."""
    if not 0 <= k < nvars:
        raise DimensionMismatch(f"variable index {k} out of range for {nvars}")
    exps = [0] * nvars
    exps[k] = 1
    return Polynomial({Monomial(exps): 1.0}, nvars=nvars)


def variables(nvars):
    """All coordinate polynomials [x1, ..., x_nvars]."""
    return [variable(k, nvars) for k in range(nvars)]


def mul(p: Polynomial, q: Polynomial) -> Polynomial:
    """Coefficient-exact product of two polynomials over the same variables."""
    if p.nvars != q.nvars:
        raise DimensionMismatch(
            f"multiplying polynomials over {p.nvars} and {q.nvars} variables"
        )
    out = {}
    for ma, ca in p.terms.items():
        for mb, cb in q.terms.items():
            m = ma * mb
            out[m] = out.get(m, 0.0) + ca * cb
    return Polynomial(out, nvars=p.nvars)


def eval(p: Polynomial, point) -> float:
    """Evaluate p at a point, as the exact sum of coeff * prod(point^alpha)."""
    pt = np.asarray(point, dtype=float)
    if pt.shape != (p.nvars,):
        raise DimensionMismatch(
            f"point of shape {pt.shape} for a {p.nvars}-variable polynomial"
        )
    total = 0.0
    for mono, coeff in p.terms.items():
        v = coeff
        for k, e in enumerate(mono):
            if e:
                v *= pt[k] ** e
        total += v
    return total


def eval_many(p: Polynomial, points) -> np.ndarray:
    """Vectorized evaluation over an (N, nvars) array of points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != p.nvars:
        raise DimensionMismatch(
            f"points of shape {pts.shape} for a {p.nvars}-variable polynomial"
        )
    total = np.zeros(pts.shape[0])
    for mono, coeff in p.terms.items():
        term = np.full(pts.shape[0], coeff)
        for k, e in enumerate(mono):
            if e:
                term *= pts[:, k] ** e
        total += term
    return total


class MonomialBasis:
    """All monomials over d variables up to total degree r, graded-lex ordered.

    The first element is always the constant monomial and the length is
    C(d+r, r). Supports len/iter/indexing plus an inverse lookup.
    """

    __slots__ = ("nvars", "degree", "monomials", "_pos")

    def __init__(self, nvars, degree, monomials):
        self.nvars = nvars
        self.degree = degree
        self.monomials = tuple(monomials)
        expected = math.comb(nvars + degree, degree)
        if len(self.monomials) != expected:
            raise DimensionMismatch(
                f"basis over {nvars} vars to degree {degree} must have "
                f"{expected} monomials, got {len(self.monomials)}"
            )
        self._pos = {m: k for k, m in enumerate(self.monomials)}

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __getitem__(self, k):
        return self.monomials[k]

    def index(self, mono):
        m = mono if isinstance(mono, Monomial) else Monomial(mono)
        return self._pos[m]

    def __contains__(self, mono):
        m = mono if isinstance(mono, Monomial) else Monomial(mono)
        return m in self._pos

    def __repr__(self):
        return f"MonomialBasis(nvars={self.nvars}, degree={self.degree}, len={len(self)})"


def monomials_of_degree(d, k):
    """Monomials of exact total degree k over d variables, graded-lex ordered."""
    out = []
    for combo in combinations_with_replacement(range(d), k):
        exps = [0] * d
        for idx in combo:
            exps[idx] += 1
        out.append(Monomial(exps))
    return out


def basis(d: int, r: int) -> MonomialBasis:
    """Monomial basis [x]_r over d variables.

    Args:
        d: number of variables, at least 1.
        r: maximum total degree, at least 0.

    Returns:
        MonomialBasis of length C(d+r, r) whose first element is 1.
    """
    if d < 1 or r < 0:
        raise ValueError(f"basis needs d >= 1 and r >= 0, got d={d}, r={r}")
    monos = []
    for k in range(r + 1):
        monos.extend(monomials_of_degree(d, k))
    return MonomialBasis(d, r, monos)


def motzkin() -> Polynomial:
    """The Motzkin polynomial x1^4 x2^2 + x1^2 x2^4 + 1 - 3 x1^2 x2^2.

    Globally nonnegative but not a sum of squares; the standard witness that
    the sum-of-squares test is sufficient, not necessary.
    """
    return Polynomial(
        {
            Monomial((4, 2)): 1.0,
            Monomial((2, 4)): 1.0,
            Monomial((0, 0)): 1.0,
            Monomial((2, 2)): -3.0,
        },
        nvars=2,
    )
