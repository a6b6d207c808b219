"""Moment-relaxation estimators for rotation search with outliers.

Two families of solvers live here. The sparse programs lift the decision
variables (omega, q) onto the monomial basis [1, omega_1..omega_n, q,
omega_1 q, .., omega_n q] of side 5(n+1), giving a single moment block whose
rows encode binariness, per-measurement residual caps, and the structural
identities tying the omega_i q sub-blocks together. One sparse program fixes
the selected-weight budget to alpha*n and minimizes the squared norm of the
weight pseudo-expectation, which spreads mass over every measurement that
some rotation can explain; its output is a list of n per-measurement
hypotheses rather than a single estimate. The other keeps the truncated
per-measurement cost as the objective and rounds to one quaternion.

The dense programs build the full order-r relaxation over the n+4 raw
variables for desk-scale n, covering the max-consensus, truncated,
exact-trim, and fixed-budget formulations, and reuse the same rounding.

Extraction note: the whole feasible set is invariant under q -> -q, so a
solver converging to a symmetric point zeroes every odd-degree moment,
including the first-row entries E[omega_i q] that the textbook rounding
formula divides by. All extraction here therefore reads the even block
E[omega_i q q'] and takes its dominant eigenvector, which coincides with
the first-row read whenever the moment matrix is rank-one, and remains
well-defined on any sign-symmetric mixture.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import moment as M
from . import poly as P
from . import sdp as S
from .errors import (
    ConfigError,
    DeskScaleExceeded,
    EmptySupport,
    RoundingFailure,
)
from .geometry import (
    UnitQuaternion,
    closed_form_wahba,
    cost_matrix,
    geodesic_error_deg,
)

EPS_W = 1e-6
SELECT_THRESHOLD = 0.5
DENSE_MAX_N = 8
DENSE_KINDS = ("MC1", "TLS1", "LTS2", "LDR")

__all__ = [
    "EPS_W",
    "SELECT_THRESHOLD",
    "DENSE_MAX_N",
    "DENSE_KINDS",
    "SparseBasis",
    "HypothesisEntry",
    "HypothesisList",
    "SolveOutcome",
    "build_slides_sdp",
    "build_tls_sparse_sdp",
    "sparse_rank_one",
    "extract_hypotheses",
    "slides",
    "sample_hypotheses",
    "solve_tls_sparse",
    "round_weighted",
    "relaxation_gap",
    "tls_objective",
    "consensus_seed",
    "build_dense_estimator",
    "solve_dense",
]


class SparseBasis:
    """Index arithmetic for the sparse monomial basis [1, omega, q, omega q].

    Zero-based layout: the constant monomial sits at 0, omega_i at 1+i,
    the quaternion block at [n+1, n+5), and the omega_i q block at
    [n+5+4i, n+9+4i), for a total side of 5(n+1).
    """

    __slots__ = ("n",)

    def __init__(self, n):
        n = int(n)
        if n < 1:
            raise ConfigError(f"sparse basis needs n >= 1, got {n}")
        self.n = n

    @property
    def side(self):
        return 5 * (self.n + 1)

    def omega(self, i):
        self._check(i)
        return 1 + i

    def q_block(self):
        return slice(self.n + 1, self.n + 5)

    def omega_q_block(self, i):
        self._check(i)
        start = self.n + 5 + 4 * i
        return slice(start, start + 4)

    def _check(self, i):
        if not 0 <= i < self.n:
            raise ConfigError(f"measurement index {i} outside [0, {self.n})")

    def __len__(self):
        return self.side

    def __repr__(self):
        return f"SparseBasis(n={self.n}, side={self.side})"


class HypothesisEntry:
    """One rotation hypothesis extracted from measurement ``source_index``."""

    __slots__ = ("estimate", "weight", "source_index", "valid")

    def __init__(self, estimate, weight, source_index, valid):
        self.estimate = estimate
        self.weight = float(weight)
        self.source_index = int(source_index)
        self.valid = bool(valid)

    def error_deg(self, truth: UnitQuaternion):
        if not self.valid:
            return None
        return geodesic_error_deg(self.estimate, truth)

    def __repr__(self):
        if self.valid:
            return (
                f"HypothesisEntry(i={self.source_index}, "
                f"weight={self.weight:.4f}, q={self.estimate.q.round(4)})"
            )
        return f"HypothesisEntry(i={self.source_index}, invalid)"


class HypothesisList:
    """Ordered hypotheses, one per measurement, invalid entries kept.

    Entries whose weight or aligned second moment fell below EPS_W are
    marked invalid and carry no estimate (the extracted vector had norm
    zero); they stay in the list so it always has length n.
    """

    __slots__ = ("entries",)

    def __init__(self, entries):
        self.entries = tuple(entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def valid_entries(self):
        return [e for e in self.entries if e.valid]

    def min_error_deg(self, truth: UnitQuaternion):
        """Best geodesic error over valid entries; inf when none are valid."""
        errs = [e.error_deg(truth) for e in self.valid_entries()]
        return min(errs) if errs else math.inf

    def best_entry(self, truth: UnitQuaternion):
        valid = self.valid_entries()
        if not valid:
            return None
        return min(valid, key=lambda e: e.error_deg(truth))

    def to_json(self, truth: UnitQuaternion = None):
        rows = []
        for e in self.entries:
            row = {
                "source_index": e.source_index,
                "weight": e.weight,
                "valid": e.valid,
                "estimate": e.estimate.q.tolist() if e.valid else None,
            }
            if truth is not None:
                row["error_deg"] = e.error_deg(truth)
            rows.append(row)
        return {"n": len(self.entries), "entries": rows}

    def __repr__(self):
        return (
            f"HypothesisList({len(self.valid_entries())} valid "
            f"of {len(self.entries)})"
        )


class SolveOutcome:
    """Result of one relaxation solve plus rounding.

    ``f_sdp`` is the solver's objective value, ``f_hat`` the objective of
    the rounded point (each program documents its rounding), and ``gap``
    their relative difference. ``selected`` collects the measurement
    indices whose extracted weight exceeds 0.5. ``residuals`` keeps the
    solver's KKT triple; ``status`` and ``iterations`` echo the solve.
    """

    __slots__ = (
        "kind",
        "estimate",
        "f_sdp",
        "f_hat",
        "gap",
        "selected",
        "weights",
        "residuals",
        "status",
        "iterations",
    )

    def __init__(self, kind, estimate, f_sdp, f_hat, gap, selected, weights,
                 residuals, status, iterations):
        self.kind = str(kind)
        self.estimate = estimate
        self.f_sdp = float(f_sdp)
        self.f_hat = float(f_hat)
        self.gap = float(gap)
        self.selected = tuple(int(i) for i in selected)
        self.weights = tuple(float(w) for w in weights)
        self.residuals = residuals
        self.status = str(status)
        self.iterations = int(iterations)

    def error_deg(self, truth: UnitQuaternion):
        if self.estimate is None:
            return None
        return geodesic_error_deg(self.estimate, truth)

    def to_json(self, truth: UnitQuaternion = None):
        out = {
            "kind": self.kind,
            "estimate": None if self.estimate is None else self.estimate.q.tolist(),
            "f_sdp": self.f_sdp,
            "f_hat": None if math.isinf(self.f_hat) else self.f_hat,
            "f_hat_is_finite": not math.isinf(self.f_hat),
            "gap": self.gap,
            "selected": list(self.selected),
            "weights": list(self.weights),
            "status": self.status,
            "iterations": self.iterations,
        }
        if truth is not None:
            out["error_deg"] = self.error_deg(truth)
        return out

    def __repr__(self):
        return (
            f"SolveOutcome({self.kind}, f_sdp={self.f_sdp:.6g}, "
            f"gap={self.gap:.2e}, status={self.status})"
        )


def relaxation_gap(f_sdp, f_hat) -> float:
    """Relative gap |f_sdp - f_hat| / (1 + |f_sdp| + |f_hat|)."""
    f_sdp = float(f_sdp)
    f_hat = float(f_hat)
    if math.isinf(f_hat) or math.isinf(f_sdp):
        return 1.0
    return abs(f_sdp - f_hat) / (1.0 + abs(f_sdp) + abs(f_hat))


def tls_objective(instance, quat: UnitQuaternion) -> float:
    """Truncated cost sum(min(r_i^2, c_bar^2)) at one rotation."""
    r2 = instance.residuals_sq(quat)
    return float(np.minimum(r2, instance.c_bar_sq).sum())


def consensus_seed(instance, max_triples=25_000):
    """Best rotation over minimal triples, scored by residuals under the cap.

    Fits a rotation to every 3-subset of measurements (subsampled
    deterministically past ``max_triples``) and keeps the one explaining the
    most residuals within c_bar^2. Returns (omega indicator array, quaternion),
    ready to lift into a warm start. Quality degrades gracefully: even a
    mediocre seed only costs solver iterations, never correctness.
    """
    import itertools

    n = instance.n
    if n < 3:
        q = closed_form_wahba(instance.measurements)
        r2 = instance.residuals_sq(q)
        return (r2 <= instance.c_bar_sq).astype(float), q
    triples = list(itertools.combinations(range(n), 3))
    if len(triples) > max_triples:
        rng = np.random.default_rng(0)
        keep = rng.choice(len(triples), size=max_triples, replace=False)
        triples = [triples[int(k)] for k in sorted(keep)]
    best = (-1, None)
    for tri in triples:
        try:
            q = closed_form_wahba([instance.measurements[j] for j in tri])
        except (ValueError, np.linalg.LinAlgError):
            continue
        hits = int(np.count_nonzero(
            instance.residuals_sq(q) <= instance.c_bar_sq))
        if hits > best[0]:
            best = (hits, q)
    if best[1] is None:
        raise RoundingFailure("no minimal triple produced a usable rotation")
    q = best[1]
    return (instance.residuals_sq(q) <= instance.c_bar_sq).astype(float), q


# ---------------------------------------------------------------------------
# sparse programs


def _structural_rows(prog, basis, measurements, c_bar_sq):
    """Emit the constraint families shared by both sparse programs.

    Returns the per-family row counts so builders and tests can audit the
    layout. Families, in emission order:

      corner      X[1,1] = 1
      omega_diag  X[omega_i, omega_i] = X[omega_i]
      q_trace     tr(X[q, q']) = 1
      residual    X[omega_i] (|b|^2+|a|^2) - 2 tr(M_i' X[q, omega_i q']) + s_i
                  = c_bar^2, slack s_i >= 0 in its own 1x1 block
      omega_sq    X[omega_i q, omega_i q'] = X[q, omega_i q'], as 10 cell
                  equations plus 6 symmetry rows on the q block
      lin_q       X[1, omega_i q] = X[omega_i, q]
      lin_wq      X[1, omega_i q] = X[omega_i, omega_i q]
      pair_sym    X[omega_i q, omega_j q'] symmetric, 6 rows per pair i<j
      pair_trace  tr(X[omega_i q, omega_j q']) = X[omega_i, omega_j], i <= j
    """
    n = basis.n
    qb = basis.q_block().start
    counts = {}

    row = prog.new_row(1.0)
    prog.add_entry(row, 0, 0, 0, 1.0)
    counts["corner"] = 1

    for i in range(n):
        w = basis.omega(i)
        row = prog.new_row(0.0)
        prog.add_entry(row, 0, w, w, 1.0)
        prog.add_entry(row, 0, w, 0, -1.0)
    counts["omega_diag"] = n

    row = prog.new_row(1.0)
    for a in range(4):
        prog.add_entry(row, 0, qb + a, qb + a, 1.0)
    counts["q_trace"] = 1

    for i, m in enumerate(measurements):
        w = basis.omega(i)
        wq = basis.omega_q_block(i).start
        cmat = cost_matrix(m)
        s_ab = float(m.a @ m.a + m.b @ m.b)
        row = prog.new_row(c_bar_sq)
        prog.add_entry(row, 0, w, 0, s_ab)
        for a in range(4):
            for b in range(4):
                if cmat[a, b] != 0.0:
                    prog.add_entry(row, 0, qb + a, wq + b, -2.0 * cmat[a, b])
        prog.add_entry(row, 1 + i, 0, 0, 1.0)
    counts["residual"] = n

    for i in range(n):
        wq = basis.omega_q_block(i).start
        for a in range(4):
            for b in range(a, 4):
                row = prog.new_row(0.0)
                prog.add_entry(row, 0, wq + a, wq + b, 1.0)
                prog.add_entry(row, 0, qb + a, wq + b, -1.0)
        for a in range(4):
            for b in range(a + 1, 4):
                row = prog.new_row(0.0)
                prog.add_entry(row, 0, qb + a, wq + b, 1.0)
                prog.add_entry(row, 0, qb + b, wq + a, -1.0)
    counts["omega_sq"] = 16 * n

    for i in range(n):
        w = basis.omega(i)
        wq = basis.omega_q_block(i).start
        for a in range(4):
            row = prog.new_row(0.0)
            prog.add_entry(row, 0, 0, wq + a, 1.0)
            prog.add_entry(row, 0, w, qb + a, -1.0)
    counts["lin_q"] = 4 * n

    for i in range(n):
        w = basis.omega(i)
        wq = basis.omega_q_block(i).start
        for a in range(4):
            row = prog.new_row(0.0)
            prog.add_entry(row, 0, 0, wq + a, 1.0)
            prog.add_entry(row, 0, w, wq + a, -1.0)
    counts["lin_wq"] = 4 * n

    for i in range(n):
        wqi = basis.omega_q_block(i).start
        for j in range(i + 1, n):
            wqj = basis.omega_q_block(j).start
            for a in range(4):
                for b in range(a + 1, 4):
                    row = prog.new_row(0.0)
                    prog.add_entry(row, 0, wqi + a, wqj + b, 1.0)
                    prog.add_entry(row, 0, wqi + b, wqj + a, -1.0)
    counts["pair_sym"] = 6 * (n * (n - 1)) // 2

    for i in range(n):
        wqi = basis.omega_q_block(i).start
        for j in range(i, n):
            wqj = basis.omega_q_block(j).start
            row = prog.new_row(0.0)
            for a in range(4):
                prog.add_entry(row, 0, wqi + a, wqj + a, 1.0)
            prog.add_entry(row, 0, basis.omega(i), basis.omega(j), -1.0)
    counts["pair_trace"] = n + (n * (n - 1)) // 2

    return counts


def build_slides_sdp(instance, alpha: float) -> S.MultiBlockSdp:
    """Weight-budget sparse relaxation returning per-measurement hypotheses.

    The moment block (side 5(n+1)) carries the structural rows of
    ``_structural_rows`` plus the budget row sum_i X[omega_i] = alpha n.
    The objective is the squared norm of the weight pseudo-expectation,
    sum_i X[omega_i]^2, which is quadratic in the matrix entries; it is
    encoded with one 2x2 lift block [[t_i, u_i], [u_i, 1]] per measurement
    (so t_i >= u_i^2 with u_i pinned to X[omega_i]) and objective
    min sum_i t_i. Minimizing that norm spreads weight across every
    measurement some rotation explains, which is what makes the extracted
    hypothesis list cover all consistent rotations.

    Blocks: [moment, n residual slacks (1x1), n weight lifts (2x2)].
    """
    n = instance.n
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"inlier rate alpha must be in (0, 1], got {alpha}")
    if alpha * n < 1.0:
        raise ConfigError(
            f"weight budget alpha*n = {alpha * n:.3g} is below one measurement"
        )
    basis = SparseBasis(n)
    prog = S.MultiBlockSdp([basis.side] + [1] * n + [2] * n)
    _structural_rows(prog, basis, instance.measurements, instance.c_bar_sq)

    row = prog.new_row(alpha * n)
    for i in range(n):
        prog.add_entry(row, 0, basis.omega(i), 0, 1.0)

    for i in range(n):
        lift = 1 + n + i
        row = prog.new_row(0.0)
        prog.add_entry(row, lift, 0, 1, 1.0)
        prog.add_entry(row, 0, basis.omega(i), 0, -1.0)
        row = prog.new_row(1.0)
        prog.add_entry(row, lift, 1, 1, 1.0)
        prog.set_cost(lift, 0, 0, 1.0)
    return prog


def build_tls_sparse_sdp(instance) -> S.MultiBlockSdp:
    """Truncated-cost sparse relaxation over the same basis.

    Shares every structural family with ``build_slides_sdp`` but drops the
    weight budget; the objective is the linearized truncated cost
    sum_i [X[omega_i](|b_i|^2+|a_i|^2) - 2 tr(M_i' X[q, omega_i q'])
    + (1 - X[omega_i]) c_bar^2], with the constant n c_bar^2 carried on the
    pinned corner cell. The per-measurement residual caps stay as redundant
    rows; they tighten the relaxation without changing the reachable
    optimum.

    Blocks: [moment, n residual slacks (1x1)].
    """
    n = instance.n
    basis = SparseBasis(n)
    prog = S.MultiBlockSdp([basis.side] + [1] * n)
    _structural_rows(prog, basis, instance.measurements, instance.c_bar_sq)

    qb = basis.q_block().start
    c2 = instance.c_bar_sq
    prog.set_cost(0, 0, 0, n * c2)
    for i, m in enumerate(instance.measurements):
        w = basis.omega(i)
        wq = basis.omega_q_block(i).start
        cmat = cost_matrix(m)
        s_ab = float(m.a @ m.a + m.b @ m.b)
        prog.set_cost(0, w, 0, s_ab - c2)
        for a in range(4):
            for b in range(4):
                if cmat[a, b] != 0.0:
                    prog.set_cost(0, qb + a, wq + b, -2.0 * cmat[a, b])
    return prog


def sparse_rank_one(program: S.MultiBlockSdp, instance, omega, quat):
    """Block list induced by a feasible (omega, q) point of a sparse program.

    The moment block is the outer product of the sparse basis vector
    m(omega, q); each residual slack takes up the cap headroom
    c_bar^2 - omega_i r_i^2, and, when the program carries weight-lift
    blocks, each becomes [[omega_i^2, omega_i], [omega_i, 1]]. On a binary
    omega with all selected residuals within the cap, every constraint row
    of the program is satisfied exactly.
    """
    n = instance.n
    basis = SparseBasis(n)
    om = np.asarray(omega, dtype=float)
    if om.shape != (n,):
        raise ConfigError(f"omega of shape {om.shape} for n = {n}")
    vec = np.empty(basis.side)
    vec[0] = 1.0
    vec[1:n + 1] = om
    vec[basis.q_block()] = quat.q
    for i in range(n):
        vec[basis.omega_q_block(i)] = om[i] * quat.q
    blocks = [np.outer(vec, vec)]
    r2 = instance.residuals_sq(quat)
    for i in range(n):
        blocks.append(np.array([[instance.c_bar_sq - om[i] * r2[i]]]))
    if len(program.blocks) == 1 + 2 * n:
        for i in range(n):
            blocks.append(
                np.array([[om[i] ** 2, om[i]], [om[i], 1.0]])
            )
    elif len(program.blocks) != 1 + n:
        raise ConfigError(
            f"program with {len(program.blocks)} blocks does not match a "
            f"sparse layout for n = {n}"
        )
    return blocks


def _lift_warm(program, instance, warm):
    """Turn an optional (omega, quaternion) seed into solver blocks."""
    if warm is None:
        return None
    omega, quat = warm
    return sparse_rank_one(program, instance, np.asarray(omega, float), quat)


def _vector_from_moments(weight, second_moment, first_row):
    """Recover one hypothesis vector from the even block E[omega_i q q'].

    Returns (vector, valid). The vector direction is the dominant
    eigenvector of the symmetrized block, scaled by its share of the weight
    so that a rank-one matrix reproduces E[omega_i q]/E[omega_i] exactly.
    The sign follows the first-row odd moments when they carry any mass,
    and the canonical quaternion sign otherwise.
    """
    if weight <= EPS_W:
        return None, False
    gsym = 0.5 * (second_moment + second_moment.T)
    vals, vecs = np.linalg.eigh(gsym)
    lam = float(vals[-1])
    if lam <= EPS_W * max(1.0, weight):
        return None, False
    u = vecs[:, -1]
    dot = float(first_row @ u)
    if abs(dot) > EPS_W:
        u = math.copysign(1.0, dot) * u
    else:
        u = UnitQuaternion(u).q
    return (lam / weight) * u, True


def _sparse_moments(X, basis):
    """Weights, even blocks, and first rows for every measurement."""
    n = basis.n
    qb = basis.q_block()
    weights = np.array([X[basis.omega(i), 0] for i in range(n)])
    seconds = [X[qb, basis.omega_q_block(i)] for i in range(n)]
    firsts = [X[0, basis.omega_q_block(i)] for i in range(n)]
    return weights, seconds, firsts


def extract_hypotheses(X, basis: SparseBasis) -> HypothesisList:
    """Per-measurement hypotheses from a solved sparse moment matrix."""
    X = np.asarray(X, dtype=float)
    if X.shape != (basis.side, basis.side):
        raise ConfigError(
            f"matrix of shape {X.shape} for a basis of side {basis.side}"
        )
    weights, seconds, firsts = _sparse_moments(X, basis)
    entries = []
    for i in range(basis.n):
        v, ok = _vector_from_moments(weights[i], seconds[i], firsts[i])
        if ok:
            entries.append(
                HypothesisEntry(UnitQuaternion(v / np.linalg.norm(v)),
                                weights[i], i, True)
            )
        else:
            entries.append(HypothesisEntry(None, weights[i], i, False))
    return HypothesisList(entries)


def round_weighted(X, basis: SparseBasis):
    """Weight-averaged rounding of a sparse moment matrix.

    Averages the per-measurement vectors v_i with weights X[omega_i],
    normalizes the result onto the quaternion sphere, and reports the
    indices whose weight clears the 0.5 selection threshold.
    """
    X = np.asarray(X, dtype=float)
    weights, seconds, firsts = _sparse_moments(X, basis)
    total = float(weights.sum())
    if total <= EPS_W:
        raise RoundingFailure(
            f"total extracted weight {total:.3g} is numerically zero"
        )
    acc = np.zeros(4)
    for i in range(basis.n):
        v, ok = _vector_from_moments(weights[i], seconds[i], firsts[i])
        if ok:
            acc += (weights[i] / total) * v
    norm = float(np.linalg.norm(acc))
    if norm <= EPS_W:
        raise RoundingFailure(
            "weighted hypothesis average has numerically zero norm"
        )
    q = UnitQuaternion(acc / norm)
    selected = tuple(
        i for i in range(basis.n) if weights[i] > SELECT_THRESHOLD
    )
    return q, selected


def _kkt_residuals(sol):
    prim, dual, gap = sol.residuals
    return {"primal": float(prim), "dual": float(dual), "gap": float(gap)}


def slides(
    instance,
    alpha,
    tol=1e-6,
    max_iter=40_000,
    rho=0.003,
    warm=None,
    deadline_s=None,
):
    """Solve the weight-budget relaxation and decode the hypothesis list.

    Returns (HypothesisList, SolveOutcome). The list always has one entry
    per measurement; entries whose weight or extracted vector vanished are
    flagged invalid. The outcome's estimate is the weight-averaged rounding
    (a between-clusters average when the weight spreads over several
    rotations, so prefer the list for multimodal instances); its rounded
    objective is the squared norm of the thresholded weight indicator,
    |selected|, making the reported gap an honest looseness diagnostic.

    The penalty stays frozen at ``rho``: the solver's residual-balancing
    heuristic misreads these programs' long flat valley and can walk the
    penalty into a stall, while a small fixed value converges in a fraction
    of the iterations. ``warm`` takes an (omega, quaternion) pair to seed
    the iteration (see consensus_seed); ``deadline_s`` caps wall time.
    """
    prog = build_slides_sdp(instance, alpha)
    sol = S.solve(
        prog,
        tol=tol,
        max_iter=max_iter,
        rho=rho,
        adapt_every=0,
        warm=_lift_warm(prog, instance, warm),
        deadline_s=deadline_s,
    )
    if sol.status != "Optimal":
        warnings.warn(
            f"weight-budget solve ended {sol.status} after "
            f"{sol.iterations} iterations; hypothesis list may be degraded",
            RuntimeWarning,
            stacklevel=2,
        )
    basis = SparseBasis(instance.n)
    X = sol.X[0]
    hlist = extract_hypotheses(X, basis)
    try:
        estimate, selected = round_weighted(X, basis)
    except RoundingFailure:
        estimate, selected = None, ()
    f_hat = float(len(selected))
    outcome = SolveOutcome(
        kind="slides",
        estimate=estimate,
        f_sdp=sol.objective,
        f_hat=f_hat,
        gap=relaxation_gap(sol.objective, f_hat),
        selected=selected,
        weights=[e.weight for e in hlist],
        residuals=_kkt_residuals(sol),
        status=sol.status,
        iterations=sol.iterations,
    )
    return hlist, outcome


def sample_hypotheses(hlist: HypothesisList, alpha, N, seed) -> HypothesisList:
    """Draw ceil(N/alpha) entries categorically by clamped weight.

    Deterministic for a fixed seed. Weights are clamped to be nonnegative
    and normalized; a list whose weights all clamp to zero has no support
    to sample from.
    """
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"inlier rate alpha must be in (0, 1], got {alpha}")
    if int(N) < 1:
        raise ConfigError(f"sample size N must be at least 1, got {N}")
    w = np.clip(np.array([e.weight for e in hlist]), 0.0, None)
    total = float(w.sum())
    if total <= 0.0:
        raise EmptySupport("all hypothesis weights clamp to zero")
    draws = math.ceil(int(N) / alpha)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(hlist), size=draws, p=w / total)
    return HypothesisList(tuple(hlist[int(k)] for k in idx))


def solve_tls_sparse(
    instance,
    tol=1e-6,
    max_iter=60_000,
    rho=0.003,
    warm=None,
    deadline_s=None,
) -> SolveOutcome:
    """Solve the truncated-cost sparse relaxation and round to one rotation.

    The rounded objective re-evaluates the truncated cost at the rounded
    quaternion, so a tight solve reports a gap at the solver's accuracy.
    The penalty stays frozen at ``rho`` (see slides for why); ``warm``
    takes an (omega, quaternion) pair such as consensus_seed's output.
    """
    prog = build_tls_sparse_sdp(instance)
    sol = S.solve(
        prog,
        tol=tol,
        max_iter=max_iter,
        rho=rho,
        adapt_every=0,
        warm=_lift_warm(prog, instance, warm),
        deadline_s=deadline_s,
    )
    if sol.status != "Optimal":
        warnings.warn(
            f"truncated-cost solve ended {sol.status} after "
            f"{sol.iterations} iterations",
            RuntimeWarning,
            stacklevel=2,
        )
    basis = SparseBasis(instance.n)
    X = sol.X[0]
    weights, _, _ = _sparse_moments(X, basis)
    try:
        estimate, selected = round_weighted(X, basis)
        f_hat = tls_objective(instance, estimate)
    except RoundingFailure:
        estimate, selected, f_hat = None, (), math.inf
    return SolveOutcome(
        kind="tls-sparse",
        estimate=estimate,
        f_sdp=sol.objective,
        f_hat=f_hat,
        gap=relaxation_gap(sol.objective, f_hat),
        selected=selected,
        weights=weights,
        residuals=_kkt_residuals(sol),
        status=sol.status,
        iterations=sol.iterations,
    )


# ---------------------------------------------------------------------------
# dense desk-scale programs


def _dense_residual_poly(m, nvars, n):
    """r_i(q)^2 as a polynomial over (omega_1..omega_n, q_1..q_4)."""
    cmat = cost_matrix(m)
    csym = 0.5 * (cmat + cmat.T)
    zero = (0,) * nvars
    terms = {zero: float(m.a @ m.a + m.b @ m.b)}

    def bump(exps, coeff):
        terms[exps] = terms.get(exps, 0.0) + coeff

    for a in range(4):
        for b in range(a, 4):
            coeff = -2.0 * csym[a, b] * (1.0 if a == b else 2.0)
            if coeff != 0.0:
                exps = [0] * nvars
                exps[n + a] += 1
                exps[n + b] += 1
                bump(tuple(exps), coeff)
    return P.Polynomial(terms, nvars=nvars)


def _dense_pop(instance, kind, alpha_opt):
    n = instance.n
    nvars = n + 4
    c2 = instance.c_bar_sq
    zero = (0,) * nvars

    def mono(idx, power=1):
        exps = [0] * nvars
        exps[idx] = power
        return tuple(exps)

    res = [_dense_residual_poly(m, nvars, n) for m in instance.measurements]
    eqs = []
    for i in range(n):
        eqs.append(P.Polynomial({mono(i, 2): 1.0, mono(i): -1.0}, nvars=nvars))
    eqs.append(
        P.Polynomial(
            {mono(n + a, 2): 1.0 for a in range(4)} | {zero: -1.0},
            nvars=nvars,
        )
    )

    caps = [
        P.Polynomial.constant(c2, nvars)
        - P.Polynomial({mono(i): 1.0}, nvars=nvars) * res[i]
        for i in range(n)
    ]

    if kind == "MC1":
        objective = P.Polynomial({mono(i): -1.0 for i in range(n)}, nvars=nvars)
        ineqs = caps
    elif kind == "TLS1":
        objective = P.Polynomial.constant(n * c2, nvars)
        for i in range(n):
            objective = objective + P.Polynomial(
                {mono(i): 1.0}, nvars=nvars
            ) * (res[i] - P.Polynomial.constant(c2, nvars))
        ineqs = caps
    elif kind == "LTS2":
        objective = P.Polynomial.zero(nvars)
        for i in range(n):
            objective = objective + (1.0 / n) * (
                P.Polynomial({mono(i): 1.0}, nvars=nvars) * res[i]
            )
        ineqs = []
        eqs.append(
            P.Polynomial(
                {mono(i): 1.0 for i in range(n)} | {zero: -alpha_opt * n},
                nvars=nvars,
            )
        )
    else:
        objective = P.Polynomial({mono(i, 2): 1.0 for i in range(n)},
                                 nvars=nvars)
        ineqs = caps
        eqs.append(
            P.Polynomial(
                {mono(i): 1.0 for i in range(n)} | {zero: -alpha_opt * n},
                nvars=nvars,
            )
        )
    return M.Pop(objective, eqs, ineqs, ball_bound=n + 1.0)


def build_dense_estimator(instance, kind, alpha_opt=None, r=2):
    """Order-r relaxation of one dense formulation over (omega, q).

    Kinds: MC1 maximizes the selected count under per-measurement caps;
    TLS1 minimizes the truncated cost; LTS2 minimizes the mean selected
    residual under an exact-count row; LDR fixes the count and minimizes
    the literal squared weight norm. All share omega_i^2 = omega_i,
    |q|^2 = 1, and the ball bound n+1.
    """
    if kind not in DENSE_KINDS:
        raise ConfigError(
            f"unknown dense kind {kind!r}; expected one of {DENSE_KINDS}"
        )
    n = instance.n
    if n > DENSE_MAX_N:
        raise DeskScaleExceeded(
            f"dense relaxation over n = {n} measurements exceeds the "
            f"desk-scale cap {DENSE_MAX_N}; use the sparse programs instead"
        )
    if kind in ("LTS2", "LDR"):
        if alpha_opt is None:
            raise ConfigError(f"kind {kind} requires alpha_opt")
        alpha_opt = float(alpha_opt)
        if not 0.0 < alpha_opt <= 1.0 or alpha_opt * n < 1.0:
            raise ConfigError(
                f"alpha_opt = {alpha_opt} gives an unusable count "
                f"{alpha_opt * n:.3g} for n = {n}"
            )
    return M.build_relaxation(_dense_pop(instance, kind, alpha_opt), r)


def _dense_moments(pm, n):
    """Weights, even blocks, and odd first moments from a dense solve."""
    nvars = n + 4

    def mono(*pairs):
        exps = [0] * nvars
        for idx, power in pairs:
            exps[idx] += power
        return P.Monomial(exps)

    weights = np.array([M.extract(pm, mono((i, 1))) for i in range(n)])
    seconds = []
    firsts = []
    for i in range(n):
        g = np.empty((4, 4))
        for a in range(4):
            for b in range(4):
                g[a, b] = M.extract(pm, mono((i, 1), (n + a, 1), (n + b, 1)))
        seconds.append(g)
        firsts.append(
            np.array([M.extract(pm, mono((i, 1), (n + a, 1))) for a in range(4)])
        )
    return weights, seconds, firsts


def _round_dense(pm, n):
    weights, seconds, firsts = _dense_moments(pm, n)
    total = float(weights.sum())
    if total <= EPS_W:
        raise RoundingFailure(
            f"total extracted weight {total:.3g} is numerically zero"
        )
    acc = np.zeros(4)
    for i in range(n):
        v, ok = _vector_from_moments(weights[i], seconds[i], firsts[i])
        if ok:
            acc += (weights[i] / total) * v
    norm = float(np.linalg.norm(acc))
    if norm <= EPS_W:
        raise RoundingFailure(
            "weighted hypothesis average has numerically zero norm"
        )
    q = UnitQuaternion(acc / norm)
    selected = tuple(i for i in range(n) if weights[i] > SELECT_THRESHOLD)
    return q, selected, weights


def _dense_rounded_objective(instance, kind, quat, alpha_opt):
    """Objective of the rounded point with the count variables re-optimized.

    Given the rounded rotation, the best binary weights are explicit for
    every kind; an infeasible count (fixed-budget kinds with too few
    measurements inside the cap) reports inf.
    """
    n = instance.n
    c2 = instance.c_bar_sq
    r2 = np.sort(instance.residuals_sq(quat)) if kind == "LTS2" else \
        instance.residuals_sq(quat)
    if kind == "MC1":
        return -float(np.count_nonzero(r2 <= c2))
    if kind == "TLS1":
        return float(np.minimum(r2, c2).sum())
    if kind == "LTS2":
        k = int(round(alpha_opt * n))
        return float(r2[:k].sum()) / n
    fits = int(np.count_nonzero(r2 <= c2))
    return alpha_opt * n if fits + 1e-9 >= alpha_opt * n else math.inf


def solve_dense(instance, kind, alpha_opt=None, r=2, tol=1e-7,
                max_iter=100_000, rho=0.003) -> SolveOutcome:
    """Build, solve, and round one dense desk-scale relaxation.

    The penalty stays frozen at ``rho``, matching the sparse solvers: the
    selection weights travel a long flat valley on their way to binary
    values and the balancing heuristic stalls partway along it.

    The consensus objective ("MC1") keeps a genuine relaxation gap of
    order 1e-3 at r=2; pass r=3 (and a penalty near 1) when the objective
    value itself has to match the combinatorial optimum.
    """
    relax = build_dense_estimator(instance, kind, alpha_opt=alpha_opt, r=r)
    sol = S.solve(relax, tol=tol, max_iter=max_iter, rho=rho, adapt_every=0)
    pm = relax.pseudo_moment(sol)
    n = instance.n
    try:
        estimate, selected, weights = _round_dense(pm, n)
        f_hat = _dense_rounded_objective(instance, kind, estimate, alpha_opt)
    except RoundingFailure:
        weights, _, _ = _dense_moments(pm, n)
        estimate, selected, f_hat = None, (), math.inf
    return SolveOutcome(
        kind=kind,
        estimate=estimate,
        f_sdp=sol.objective,
        f_hat=f_hat,
        gap=relaxation_gap(sol.objective, f_hat),
        selected=selected,
        weights=weights,
        residuals=_kkt_residuals(sol),
        status=sol.status,
        iterations=sol.iterations,
    )
