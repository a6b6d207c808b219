import math

import numpy as np
import pytest

from rotcert import moment, poly, sdp
from rotcert.errors import RelaxationOrderError
from rotcert.moment import (
    Pop,
    build_relaxation,
    extract,
    is_sos,
    pop_lower_bound,
)
from rotcert.poly import Polynomial


def tri(n):
    return n * (n + 1) // 2


def grid_min(pop, lo=-2.0, hi=2.0, steps=201):
    """Brute-force reference optimum for 1- and 2-variable POPs."""
    axes = [np.linspace(lo, hi, steps)] * pop.nvars
    mesh = np.meshgrid(*axes)
    pts = np.column_stack([m.ravel() for m in mesh])
    feasible = np.ones(len(pts), dtype=bool)
    for h in pop.equalities:
        # equality sets in the oracle suite are grid-exact by construction
        feasible &= np.abs(poly.eval_many(h, pts)) <= 1e-9
    for g in pop.inequalities:
        feasible &= poly.eval_many(g, pts) >= -1e-9
    vals = poly.eval_many(pop.objective, pts[feasible])
    return float(vals.min())


def x_of(k, d):
    return poly.variable(k, d)


class TestBuildCounts:
    def test_unconstrained_two_vars_order_two(self):
        pop = Pop(Polynomial({(2, 0): 1.0}, 2))
        relax = build_relaxation(pop, 2)
        assert relax.blocks == [6]
        expected = tri(6) - math.comb(2 + 4, 4) + 1
        assert relax.num_consistency_rows == expected == 7
        assert relax.num_rows == 7

    def test_single_equality_order_one(self):
        d = 2
        h = x_of(0, d) * x_of(0, d) + x_of(1, d) * x_of(1, d) - 1.0
        pop = Pop(Polynomial({(1, 0): 1.0}, d), equalities=[h])
        relax = build_relaxation(pop, 1)
        assert relax.num_redundant_rows == [1]

    def test_degree_two_inequality_order_two(self):
        d = 2
        g = 1.0 - x_of(0, d) * x_of(0, d)
        pop = Pop(Polynomial({(1, 0): 1.0}, d), inequalities=[g])
        relax = build_relaxation(pop, 2)
        assert relax.blocks[1] == math.comb(2 + 1, 1) == 3

    def test_redundant_equality_count_formula(self):
        d = 2
        h = x_of(0, d) * x_of(0, d) - 1.0
        pop = Pop(Polynomial({(2, 0): 1.0}, d), equalities=[h])
        r = 2
        relax = build_relaxation(pop, r)
        budget = 2 * r - h.degree
        assert relax.num_redundant_rows == [math.comb(d + budget, budget)]

    def test_order_too_small_reports_degree(self):
        pop = Pop(poly.motzkin())
        with pytest.raises(RelaxationOrderError) as err:
            build_relaxation(pop, 2)
        assert err.value.offending_degree == 6

    def test_schmudgen_flag_adds_product_blocks(self):
        d = 2
        g1 = 1.0 - x_of(0, d) * x_of(0, d)
        g2 = 1.0 - x_of(1, d) * x_of(1, d)
        pop = Pop(Polynomial({(1, 1): 1.0}, d), inequalities=[g1, g2])
        plain = build_relaxation(pop, 2)
        tight = build_relaxation(pop, 2, schmudgen=True)
        assert len(tight.blocks) == len(plain.blocks) + 1


class TestRankOneStructure:
    @pytest.mark.parametrize("seed", range(4))
    def test_feasible_points_satisfy_all_rows(self, seed):
        rng = np.random.default_rng(seed)
        d = 2
        x1, x2 = x_of(0, d), x_of(1, d)
        # domain: x1^2 = 1, x2 in [-1, 1], ball of radius 2
        pop = Pop(
            x1 * x2 + 0.5 * x2,
            equalities=[x1 * x1 - 1.0],
            inequalities=[1.0 - x2 * x2],
            ball_bound=4.0,
        )
        relax = build_relaxation(pop, 2)
        amat, bvec, _ = relax.compile()
        for _ in range(5):
            z = np.array([rng.choice([-1.0, 1.0]), rng.uniform(-1, 1)])
            blocks = relax.rank_one(z)
            vec = relax.stack(blocks)
            assert np.abs(amat @ vec - bvec).max() <= 1e-12

    def test_rank_one_objective_matches_eval(self):
        d = 2
        x1, x2 = x_of(0, d), x_of(1, d)
        pop = Pop(x1 * x1 * x2 - x2, ball_bound=9.0)
        relax = build_relaxation(pop, 2)
        _, _, cvec = relax.compile()
        z = np.array([0.7, -1.2])
        val = cvec @ relax.stack(relax.rank_one(z))
        assert val == pytest.approx(poly.eval(pop.objective, z), rel=1e-12)


class TestPopLowerBound:
    def test_exact_quadratic_with_equality(self):
        d = 1
        x = x_of(0, d)
        pop = Pop(x * x, equalities=[x * x - 1.0])
        m_star, pm = pop_lower_bound(pop, 1)
        assert m_star == pytest.approx(1.0, abs=1e-6)
        assert extract(pm, (0,)) == pytest.approx(1.0, abs=1e-6)

    def test_motzkin_relaxation_dips_below_zero(self):
        pop = Pop(poly.motzkin(), ball_bound=4.0)
        m_star, _ = pop_lower_bound(pop, 3, tol=1e-7)
        assert m_star <= 0.0

    def test_quartic_well(self):
        d = 1
        x = x_of(0, d)
        pop = Pop(x * x * x * x - x * x, inequalities=[1.0 - x * x])
        m_star, _ = pop_lower_bound(pop, 2)
        assert m_star == pytest.approx(-0.25, abs=1e-5)

    def test_grid_oracle_upper_bounds(self):
        d = 2
        x1, x2 = x_of(0, d), x_of(1, d)
        pops = [
            Pop(x1 * x1 + x2 * x2 - x1, ball_bound=4.0),
            Pop(x1 * x2, inequalities=[1.0 - x1 * x1, 1.0 - x2 * x2]),
            Pop(
                x1 * x1 * x2 * x2 + x1,
                equalities=[x1 * x1 - 1.0],
                inequalities=[1.0 - x2 * x2],
            ),
        ]
        for pop in pops:
            ref = grid_min(pop)
            for r in (1, 2, 3):
                if 2 * r < pop.max_degree():
                    continue
                m_star, _ = pop_lower_bound(pop, r)
                assert m_star <= ref + 1e-4, f"{pop} at order {r}"

    def test_monotone_in_order(self):
        rng = np.random.default_rng(11)
        d = 2
        x1, x2 = x_of(0, d), x_of(1, d)
        suite = []
        for _ in range(10):
            c = rng.uniform(-1, 1, size=4)
            obj = c[0] * x1 + c[1] * x2 + c[2] * x1 * x2 + c[3] * x1 * x1
            suite.append(Pop(obj, inequalities=[1.0 - x1 * x1, 1.0 - x2 * x2]))
        for k, pop in enumerate(suite):
            lo, _ = pop_lower_bound(pop, 1)
            hi, _ = pop_lower_bound(pop, 2)
            assert hi >= lo - 1e-5, f"suite member {k}"


class TestExtract:
    def test_constant_is_one(self):
        d = 1
        x = x_of(0, d)
        _, pm = pop_lower_bound(Pop(x * x, equalities=[x * x - 1.0]), 1)
        assert extract(pm, (0,)) == pytest.approx(1.0, abs=1e-7)

    def test_rank_one_moments_are_powers(self):
        d = 2
        pop = Pop(Polynomial({(1, 0): 1.0}, d), ball_bound=9.0)
        relax = build_relaxation(pop, 2)
        z = np.array([1.3, -0.4])
        pm = moment.PseudoMomentMatrix(relax.rank_one(z)[0], relax.basis, 2)
        for mono in [(1, 0), (0, 1), (2, 0), (1, 1), (2, 2), (3, 1)]:
            expected = z[0] ** mono[0] * z[1] ** mono[1]
            assert extract(pm, mono) == pytest.approx(expected, rel=1e-12)

    def test_argmin_recovery(self):
        d = 1
        x = x_of(0, d)
        pop = Pop(x * x - 4.0 * x + 4.0, inequalities=[9.0 - x * x])
        _, pm = pop_lower_bound(pop, 1)
        assert extract(pm, (1,)) == pytest.approx(2.0, abs=1e-5)

    def test_degree_overflow(self):
        d = 1
        x = x_of(0, d)
        _, pm = pop_lower_bound(Pop(x * x, equalities=[x * x - 1.0]), 1)
        with pytest.raises(RelaxationOrderError):
            extract(pm, (3,))


class TestIsSos:
    def test_perfect_square(self):
        d = 1
        x = x_of(0, d)
        res = is_sos(x * x + 2.0 * x + 1.0)
        assert res
        g = res.gram
        assert np.linalg.eigvalsh(g).min() >= -1e-6
        w = res.basis
        rebuilt = {}
        for i in range(len(w)):
            for j in range(len(w)):
                gamma = w[i] * w[j]
                rebuilt[gamma] = rebuilt.get(gamma, 0.0) + g[i, j]
        assert rebuilt[poly.Monomial((2,))] == pytest.approx(1.0, abs=1e-6)
        assert rebuilt[poly.Monomial((1,))] == pytest.approx(2.0, abs=1e-6)
        assert rebuilt[poly.Monomial((0,))] == pytest.approx(1.0, abs=1e-6)

    def test_motzkin_is_not_sos(self):
        res = is_sos(poly.motzkin())
        assert not res

    def test_negative_quadratic(self):
        d = 1
        x = x_of(0, d)
        assert not is_sos(-1.0 * (x * x))

    def test_odd_degree_refused(self):
        d = 1
        x = x_of(0, d)
        res = is_sos(x * x * x + x)
        assert not res and "odd" in res.reason

    def test_sos_implies_nonnegative_samples(self):
        rng = np.random.default_rng(23)
        d = 2
        x1, x2 = x_of(0, d), x_of(1, d)
        candidates = [
            (x1 + x2) * (x1 + x2) + 0.5 * (x1 * x1),
            (x1 * x2 - 1.0) * (x1 * x2 - 1.0),
            (x1 * x1 - x2) * (x1 * x1 - x2) + x2 * x2,
        ]
        tol = 1e-6
        for p in candidates:
            res = is_sos(p, tol=tol)
            assert res, str(p)
            pts = rng.uniform(-3, 3, size=(1000, 2))
            vals = poly.eval_many(p, pts)
            norms = np.linalg.norm(pts, axis=1)
            floor = -tol * (1.0 + norms ** p.degree)
            assert (vals >= floor).all()


class TestPseudoMomentInvariants:
    def test_validate_passes_on_solved(self):
        d = 2
        x1, x2 = x_of(0, d), x_of(1, d)
        pop = Pop(x1 * x1 + x2, inequalities=[1.0 - x1 * x1, 1.0 - x2 * x2])
        _, pm = pop_lower_bound(pop, 2)
        pm.validate()

    def test_validate_rejects_bad_corner(self):
        basis = poly.basis(1, 1)
        bad = np.array([[2.0, 0.0], [0.0, 1.0]])
        with pytest.raises(Exception):
            moment.PseudoMomentMatrix(bad, basis, 1).validate()

    def test_eigratio_rank_one(self):
        d = 1
        pop = Pop(Polynomial({(1,): 1.0}, d), ball_bound=4.0)
        relax = build_relaxation(pop, 1)
        pm = moment.PseudoMomentMatrix(
            relax.rank_one(np.array([1.5]))[0], relax.basis, 1
        )
        top, second, ratio = pm.eigratio()
        assert top > 0 and abs(second) <= 1e-12 and ratio == math.inf
