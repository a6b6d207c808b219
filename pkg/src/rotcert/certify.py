"""Certificates for data assumptions and the estimation-contract bounds.

Two kinds of machinery live here. The checkers decide, for a concrete set
of sensing matrices, whether the distributional assumptions behind the
robust-estimation guarantees hold: certifiable hypercontractivity is a
single sum-of-squares test, certifiable anti-concentration is a pair of
polynomial optimization problems whose lower bounds must stay positive.
The bound evaluators turn the closed-form a-priori formulas and the
singular-value a-posteriori formula into numbers (and reports) for a given
instance. All outputs concern the Euclidean error between vectorized
rotations; callers can convert to degrees with geometry.geodesic_error_deg.
"""

from __future__ import annotations

import itertools
import json
import math

import numpy as np

from . import poly as P
from .errors import (
    ConfigError,
    DimensionMismatch,
    InfiniteBound,
    NoNontrivialEta,
    OutOfRegime,
    RelaxationOrderError,
    Unsupported,
    VacuousBound,
)
from . import sdp as S
from .geometry import wahba_matrix
from .moment import Pop, build_relaxation, is_sos

NUM_VARS = 9

# a rotation is pinned by this many generic measurements
D_BAR = 3

REPORT_KINDS = frozenset(
    {
        "AposterioriMC",
        "AposterioriTLS",
        "AprioriLTS",
        "AprioriMC",
        "AprioriTLS",
        "LtsObjective",
    }
)


class HyperParams:
    """Order k and constant C(t)^t (t = k/2) of the moment-growth test."""

    __slots__ = ("k", "C_t_pow_t")

    def __init__(self, k=4, C_t_pow_t=6.0):
        if k % 2 != 0 or k < 4:
            raise ConfigError(f"k must be an even integer >= 4, got {k}")
        if C_t_pow_t < 1.0:
            raise ConfigError(f"C(t)^t must be >= 1, got {C_t_pow_t}")
        self.k = int(k)
        self.C_t_pow_t = float(C_t_pow_t)


class AntiConParams:
    """Anti-concentration test parameters and their derived constants.

    p(a) = 1 + c2 a^2 is the certifying polynomial (p(0) = 1); the derived
    constants are C = alpha^2 eta^2 (1 - 2 c_bar)^2 / (32 c_bar),
    delta = 2 c_bar and M = 2 M_x.
    """

    __slots__ = ("alpha", "eta", "c_bar", "M_x", "p_coeff_c2")

    def __init__(self, alpha, eta, c_bar, M_x, p_coeff_c2=-0.1):
        if not 0.0 < alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
        if eta <= 0.0 or c_bar <= 0.0 or M_x <= 0.0:
            raise ConfigError("eta, c_bar and M_x must all be positive")
        if 2.0 * c_bar >= 1.0:
            raise ConfigError(
                f"need 2 c_bar < 1 for the derived constants, got c_bar={c_bar}"
            )
        self.alpha = float(alpha)
        self.eta = float(eta)
        self.c_bar = float(c_bar)
        self.M_x = float(M_x)
        self.p_coeff_c2 = float(p_coeff_c2)

    @classmethod
    def for_wahba(cls, alpha, eta, c_bar_sq=0.0021, p_coeff_c2=-0.1):
        """Defaults for rotation search: M_x = sqrt(3), c_bar from budget."""
        return cls(alpha, eta, math.sqrt(c_bar_sq), math.sqrt(3.0), p_coeff_c2)

    @property
    def C(self):
        return (
            self.alpha**2
            * self.eta**2
            * (1.0 - 2.0 * self.c_bar) ** 2
            / (32.0 * self.c_bar)
        )

    @property
    def delta(self):
        return 2.0 * self.c_bar

    @property
    def M(self):
        return 2.0 * self.M_x


class CheckResult:
    """Outcome of an assumption check; truthy iff the assumption holds."""

    __slots__ = ("holds", "failed_condition", "detail")

    def __init__(self, holds, failed_condition=None, detail=None):
        self.holds = bool(holds)
        self.failed_condition = failed_condition
        self.detail = dict(detail or {})

    def __bool__(self):
        return self.holds

    def __repr__(self):
        if self.holds:
            return "CheckResult(Holds)"
        which = (
            "" if self.failed_condition is None else f", condition {self.failed_condition}"
        )
        return f"CheckResult(Fails{which})"


class ContractReport:
    """One evaluated estimation-contract bound, JSON-serializable."""

    __slots__ = ("kind", "bound", "preconditions_met", "detail")

    def __init__(self, kind, bound, preconditions_met, detail=None):
        if kind not in REPORT_KINDS:
            raise ConfigError(f"unknown report kind {kind!r}")
        if not (bound >= 0.0):
            raise ConfigError(f"bound must be nonnegative, got {bound!r}")
        self.kind = kind
        self.bound = float(bound)
        self.preconditions_met = bool(preconditions_met)
        self.detail = dict(detail or {})

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "bound": None if math.isinf(self.bound) else self.bound,
            "bound_is_finite": math.isfinite(self.bound),
            "preconditions_met": self.preconditions_met,
            "detail": _jsonable(self.detail),
        }
        return json.dumps(payload, indent=2)

    def __repr__(self):
        return (
            f"ContractReport({self.kind}, bound={self.bound:.6g}, "
            f"preconditions_met={self.preconditions_met})"
        )


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _as_sensing_matrices(A_list):
    mats = [np.asarray(A, dtype=float) for A in A_list]
    if not mats:
        raise ConfigError("need at least one sensing matrix")
    for A in mats:
        if A.ndim != 2 or A.shape[1] != NUM_VARS:
            raise DimensionMismatch(
                f"sensing matrices must have {NUM_VARS} columns, got {A.shape}"
            )
    return mats


def _quadratic_form(gram):
    """The polynomial v' G v over the 9 rotation coordinates."""
    gram = np.asarray(gram, dtype=float)
    terms = {}
    for a in range(NUM_VARS):
        for b in range(a, NUM_VARS):
            coeff = gram[a, a] if a == b else gram[a, b] + gram[b, a]
            if coeff != 0.0:
                exps = [0] * NUM_VARS
                exps[a] += 1
                exps[b] += 1
                terms[P.Monomial(exps)] = coeff
    return P.Polynomial(terms, nvars=NUM_VARS)


def _mean_quartic(grams):
    """Mean of (v' G_i v)^2 via the averaged fourth-moment tensor."""
    T = np.zeros((NUM_VARS,) * 4)
    for G in grams:
        T += np.multiply.outer(G, G)
    T /= len(grams)
    terms = {}
    for a in range(NUM_VARS):
        for b in range(NUM_VARS):
            for c in range(NUM_VARS):
                for d in range(NUM_VARS):
                    val = T[a, b, c, d]
                    if val == 0.0:
                        continue
                    exps = [0] * NUM_VARS
                    for idx in (a, b, c, d):
                        exps[idx] += 1
                    mono = P.Monomial(exps)
                    terms[mono] = terms.get(mono, 0.0) + val
    return P.Polynomial(terms, nvars=NUM_VARS)


def check_hypercontractivity(A_list, params: HyperParams, tol=1e-6, max_iter=100_000):
    """Test whether the empirical degree-4 moment-growth inequality holds.

    Builds h(v) = C (mean_i ||A_i v||^2)^2 - mean_i ||A_i v||^4 over the
    uniform distribution on the supplied sensing matrices and reports
    whether h is a sum of squares. Only k = 4 is supported; the dense Gram
    basis at higher k is beyond desk scale.
    """
    if params.k > 4:
        raise Unsupported(
            f"only k = 4 is supported; a degree-{params.k} Gram is out of scale"
        )
    mats = _as_sensing_matrices(A_list)
    grams = [A.T @ A for A in mats]
    mean_gram = sum(grams) / len(grams)
    mean_sq_norm = _quadratic_form(mean_gram)
    h = params.C_t_pow_t * (mean_sq_norm * mean_sq_norm) - _mean_quartic(grams)
    sos = is_sos(h, tol=tol, max_iter=max_iter)
    return CheckResult(
        holds=bool(sos),
        detail={
            "k": params.k,
            "C_t_pow_t": params.C_t_pow_t,
            "n": len(mats),
            "shift": sos.shift,
            "reason": sos.reason,
        },
    )


WITNESS_MARGIN = 1e-9


def _relaxation_bound(pop, r, tol, max_iter):
    relax = build_relaxation(pop, r)
    sol = S.solve(relax, tol=tol, max_iter=max_iter)
    if sol.status == "Optimal":
        relax.pseudo_moment(sol).validate()
    return float(sol.objective), sol.status


def _negative_witness(objective, points):
    """Smallest sampled objective value if below -margin, else None.

    Any feasible point with a negative value upper-bounds the problem's
    minimum, hence also the relaxation bound, so it certifies a Fails
    verdict without solving the relaxation.
    """
    vals = P.eval_many(objective, points)
    low = float(vals.min())
    return low if low < -WITNESS_MARGIN else None


def _radial_grid(rng, radius, directions=64, radii=24):
    dirs = rng.standard_normal((directions, NUM_VARS))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.vstack([dirs, np.eye(NUM_VARS)])
    steps = np.linspace(0.0, radius, radii + 1)[1:]
    return (dirs[None, :, :] * steps[:, None, None]).reshape(-1, NUM_VARS)


def check_anticoncentration(
    A_list, params: AntiConParams, r1=2, r2=3, tol=1e-7, max_iter=30_000
):
    """Test certifiable anti-concentration of the sensing-matrix set.

    Two polynomial problems must both have positive lower bounds:

      1. per matrix, min p(||A_i v||)^2 - (1 - delta)^2 over
         ||A_i v||^2 <= delta^2 (the certifying polynomial stays near 1
         on small residuals);
      2. over the set, min C delta M^2 - ||v||^2 mean_i p(||A_i v||)^2
         over ||v||^2 <= M^2 (the tail cap).

    Condition 2 is evaluated first since it is the discriminating one; the
    per-matrix problems are deduplicated by their Gram matrices. Each
    condition is first screened with feasible sample points: a negative
    value there already certifies Fails, so only candidate Holds verdicts
    pay for a relaxation solve. Holds additionally requires the solver to
    converge; an unconverged solve is reported as Fails with its status.
    A positive bound at the chosen orders is sufficient but not necessary,
    so a Fails verdict records the orders used.
    """
    if r1 < 2:
        raise RelaxationOrderError(
            "condition 1 is a degree-4 problem; need r1 >= 2", offending_degree=4
        )
    if r2 < 3:
        raise RelaxationOrderError(
            "condition 2 is a degree-6 problem; need r2 >= 3", offending_degree=6
        )
    mats = _as_sensing_matrices(A_list)
    grams = [A.T @ A for A in mats]
    c2 = params.p_coeff_c2
    delta = params.delta
    cap = params.C * delta * params.M**2
    detail = {
        "orders": (r1, r2),
        "cap": cap,
        "delta": delta,
        "M": params.M,
        "n": len(mats),
    }
    rng = np.random.default_rng(0)

    # condition 2: one problem over the whole set
    mean_s = _quadratic_form(sum(grams) / len(grams))
    mean_p_sq = (
        P.Polynomial.constant(1.0, NUM_VARS)
        + 2.0 * c2 * mean_s
        + c2 * c2 * _mean_quartic(grams)
    )
    norm_sq = _quadratic_form(np.eye(NUM_VARS))
    objective2 = P.Polynomial.constant(cap, NUM_VARS) - norm_sq * mean_p_sq
    witness = _negative_witness(objective2, _radial_grid(rng, params.M))
    if witness is not None:
        detail["condition2_bound"] = witness
        detail["condition2_status"] = "witness"
        return CheckResult(False, failed_condition=2, detail=detail)
    bound2, status2 = _relaxation_bound(
        Pop(objective2, ball_bound=params.M**2), r2, tol, max_iter
    )
    detail["condition2_bound"] = bound2
    detail["condition2_status"] = status2
    if status2 != "Optimal" or not bound2 > 0.0:
        return CheckResult(False, failed_condition=2, detail=detail)

    # condition 1: one problem per distinct Gram matrix
    distinct = {}
    for G in grams:
        # adding 0.0 folds -0.0 into +0.0 so the byte key is canonical
        distinct.setdefault((np.round(G, 12) + 0.0).tobytes(), G)
    floor = (1.0 - delta) ** 2
    detail["condition1_distinct"] = len(distinct)
    worst = math.inf
    for G in distinct.values():
        s = _quadratic_form(G)
        p_sq = (
            P.Polynomial.constant(1.0, NUM_VARS)
            + 2.0 * c2 * s
            + c2 * c2 * (s * s)
        )
        objective1 = p_sq - P.Polynomial.constant(floor, NUM_VARS)
        cap_ineq = P.Polynomial.constant(delta**2, NUM_VARS) - s
        # feasible radial samples: scale directions into the residual cap
        dirs = np.vstack(
            [rng.standard_normal((32, NUM_VARS)), np.eye(NUM_VARS)]
        )
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        gains = np.sqrt(np.einsum("ij,jk,ik->i", dirs, G, dirs).clip(min=0.0))
        scale = delta / np.maximum(gains, 1e-9)
        pts = (dirs * scale[:, None])[None, :, :] * np.linspace(0.0, 1.0, 9)[
            1:, None, None
        ]
        witness = _negative_witness(objective1, pts.reshape(-1, NUM_VARS))
        if witness is not None:
            detail["condition1_min_bound"] = witness
            detail["condition1_status"] = "witness"
            return CheckResult(False, failed_condition=1, detail=detail)
        bound1, status1 = _relaxation_bound(
            Pop(objective1, inequalities=(cap_ineq,)), r1, tol, max_iter
        )
        worst = min(worst, bound1)
        if status1 != "Optimal" or not bound1 > 0.0:
            detail["condition1_min_bound"] = worst
            detail["condition1_status"] = status1
            return CheckResult(False, failed_condition=1, detail=detail)
    detail["condition1_min_bound"] = worst
    detail["condition1_status"] = "Optimal"
    return CheckResult(True, detail=detail)


def eta_threshold(alpha) -> float:
    """Largest eta for which the low-outlier a-priori bound beats 2 M_x."""
    if not 0.5 < alpha <= 1.0:
        raise NoNontrivialEta(
            f"no eta gives a nontrivial bound at inlier rate {alpha}"
        )
    return (2.0 / alpha) * (2.0 - 2.0 * (1.0 - alpha) / alpha)


def apriori_bound_lts_mc(alpha, eta, M_x) -> float:
    """Closed-form error bound shared by the trimmed and consensus contracts."""
    if alpha <= 0.0:
        raise InfiniteBound("the bound diverges as the inlier rate approaches 0")
    if alpha > 1.0:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
    if eta < 0.0 or M_x <= 0.0:
        raise ConfigError("need eta >= 0 and M_x > 0")
    return alpha * eta * M_x / 2.0 + 2.0 * M_x * (1.0 - alpha) / alpha


def apriori_bound_tls(alpha, eta, M_x, n, gamma0, c_bar_sq) -> float:
    """Closed-form error bound for the truncated formulation.

    Unlike the trimmed/consensus bound this one degrades with the ground
    truth residual mass gamma0; it coincides with apriori_bound_lts_mc at
    gamma0 = 0 and becomes vacuous as gamma0 approaches alpha n c_bar^2.
    """
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
    if n < 1 or gamma0 < 0.0 or c_bar_sq <= 0.0 or eta < 0.0 or M_x <= 0.0:
        raise ConfigError("invalid truncated-bound parameters")
    denom = alpha * n - gamma0 / c_bar_sq
    if denom <= 0.0:
        raise VacuousBound(
            f"alpha n - gamma0 / c_bar^2 = {denom:.6g} is nonpositive"
        )
    return (alpha**2 * eta * M_x * n / 2.0 + 2.0 * n * M_x * (1.0 - alpha)) / denom


def lts_objective_coeffs(k, beta, C_half_k):
    """Coefficients (C1^(2/k), C2^(2/k), beta_max) of the trimmed-objective bound.

    C_half_k is the hypercontractivity constant C(t)^t at t = k/2. The
    coefficients blow up as beta approaches beta_max, the largest outlier
    rate the argument tolerates.
    """
    if k % 2 != 0 or k < 4:
        raise ConfigError(f"k must be an even integer >= 4, got {k}")
    if C_half_k <= 0.0:
        raise ConfigError(f"C_half_k must be positive, got {C_half_k}")
    if beta < 0.0:
        raise ConfigError(f"beta must be nonnegative, got {beta}")
    half = k // 2
    beta_max = (1.0 / (C_half_k * 2.0 ** (3 * k - 1))) ** (1.0 / (half - 1))
    if beta >= beta_max:
        raise OutOfRegime(
            f"beta = {beta:.3e} is at or above beta_max = {beta_max:.3e}",
            beta_max=beta_max,
        )
    coeff = 2.0**half * (2.0 * beta) ** (half - 1) * C_half_k * 2.0 ** (2 * k)
    c1 = coeff / (1.0 - coeff)
    c2 = (
        (2.0 * beta) ** (half - 1)
        * (2.0**k + C_half_k * 2.0 ** (2 * k))
        / (1.0 - coeff)
    )
    return c1 ** (2.0 / k), c2 ** (2.0 / k), beta_max


def lts_objective_report(k, beta, C_half_k) -> ContractReport:
    """ContractReport wrapper; the bound field is the leading coefficient."""
    c1_pow, c2_pow, beta_max = lts_objective_coeffs(k, beta, C_half_k)
    return ContractReport(
        "LtsObjective",
        c1_pow,
        True,
        detail={"C1_pow": c1_pow, "C2_pow": c2_pow, "beta_max": beta_max,
                "k": k, "beta": beta, "C_half_k": C_half_k},
    )


def apriori_report(kind, alpha, eta, M_x, n=None, gamma0=None, c_bar_sq=None):
    """Evaluate one of the closed-form bounds as a ContractReport."""
    if kind in ("AprioriLTS", "AprioriMC"):
        bound = apriori_bound_lts_mc(alpha, eta, M_x)
        detail = {"alpha": alpha, "eta": eta, "M_x": M_x}
    elif kind == "AprioriTLS":
        bound = apriori_bound_tls(alpha, eta, M_x, n, gamma0, c_bar_sq)
        detail = {
            "alpha": alpha,
            "eta": eta,
            "M_x": M_x,
            "n": n,
            "gamma0": gamma0,
            "c_bar_sq": c_bar_sq,
        }
    else:
        raise ConfigError(f"not an a-priori bound kind: {kind!r}")
    detail["trivial_bound"] = 2.0 * M_x
    return ContractReport(kind, bound, True, detail=detail)


def aposteriori_bound(
    instance,
    selected_inliers,
    d_J=None,
    mode="MC",
    gamma0=None,
    fixed_subset=None,
) -> ContractReport:
    """Singular-value error bound from a solved instance's selected set.

    bound = 2 sqrt(d_J) c_bar / min over size-d_J subsets J of the selected
    set of sigma_min(stacked sensing matrices of J). The enumeration is
    exact over all C(|selected|, d_J) lexicographic combinations; passing
    fixed_subset instead scores that single subset (the usual choice is the
    intersection of the selected set with the true inliers). A subset with
    sigma_min = 0 makes the bound infinite; this is reported, not raised.

    The theorem preconditions (d_J small enough relative to the selected
    fraction, minus a residual-mass correction under mode "TLS") are
    evaluated and reported as flags. A fixed subset is exempt from the
    size part: the counting argument only has to produce an overlap of
    minimal-set size, since the subset itself is handed in.
    """
    sel = sorted({int(i) for i in selected_inliers})
    n = instance.n
    if not sel:
        raise ConfigError("selected set is empty")
    if sel[0] < 0 or sel[-1] >= n:
        raise ConfigError("selected indices out of range")
    if mode not in ("MC", "TLS"):
        raise ConfigError(f"mode must be 'MC' or 'TLS', got {mode!r}")
    if mode == "TLS" and gamma0 is None:
        raise ConfigError("mode 'TLS' needs gamma0")

    if fixed_subset is not None:
        subset = tuple(sorted({int(i) for i in fixed_subset}))
        if not set(subset) <= set(sel):
            raise ConfigError("fixed subset must lie inside the selected set")
        if d_J is None:
            d_J = len(subset)
        if d_J != len(subset):
            raise ConfigError("d_J disagrees with the fixed subset size")
        candidates = [subset]
    else:
        if d_J is None:
            raise ConfigError("d_J is required for exhaustive enumeration")
        if d_J > len(sel):
            raise ConfigError("d_J exceeds the selected set size")
        candidates = itertools.combinations(sel, d_J)
    if d_J < D_BAR:
        raise ConfigError(f"d_J must be at least {D_BAR}")

    sensing = {i: wahba_matrix(instance.measurements[i]) for i in sel}
    c_bar = math.sqrt(instance.c_bar_sq)
    best = math.inf
    best_subset = None
    degenerate_subset = None
    enumerated = 0
    for subset in candidates:
        enumerated += 1
        stack = np.vstack([sensing[i] for i in subset])
        smin = np.linalg.svd(stack, compute_uv=False)[-1]
        if smin < best:
            best = smin
            best_subset = subset
        if best <= 1e-12:
            # nothing can be smaller; the bound is already infinite
            degenerate_subset = best_subset
            break

    if degenerate_subset is not None:
        bound = math.inf
    else:
        bound = 2.0 * math.sqrt(d_J) * c_bar / best

    alpha = len(sel) / n
    # With a fixed subset the overlap is observed rather than argued by
    # counting, so the counting condition only needs to clear the minimal
    # set size; exhaustive enumeration must guarantee a subset of size d_J.
    d_need = D_BAR if fixed_subset is not None else d_J
    conditions = {"d_J_at_least_3": d_J >= D_BAR}
    if mode == "MC":
        kind = "AposterioriMC"
        conditions["d_J_within_overlap"] = d_need <= (2.0 * alpha - 1.0) * n
    else:
        kind = "AposterioriTLS"
        conditions["d_J_within_overlap"] = (
            d_need <= (2.0 * alpha - 1.0) * n - gamma0 / instance.c_bar_sq
        )
    return ContractReport(
        kind,
        bound,
        all(conditions.values()),
        detail={
            "d_J": d_J,
            "sigma_min": best,
            "subset": list(best_subset) if best_subset else None,
            "alpha": alpha,
            "n": n,
            "c_bar": c_bar,
            "gamma0": gamma0,
            "conditions": conditions,
            "degenerate_subset": (
                None if degenerate_subset is None else list(degenerate_subset)
            ),
            "subsets_enumerated": enumerated,
        },
    )
