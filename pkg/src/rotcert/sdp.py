"""Multi-block semidefinite programs and a first-order splitting solver.

The primal standard form is

    minimize    sum_k <C_k, X_k>
    subject to  sum_k <A_jk, X_k> = b_j   (j = 1..m),   X_k PSD,

with a list of symmetric blocks X_1, ..., X_l. Inequalities are expected to
arrive as equalities with explicit 1x1 slack blocks; the relaxation builders
in this package do exactly that.

The solver alternates a least-squares projection onto the affine set with a
eigenvalue-clamping projection onto the PSD cone, over-relaxed, with a scaled
dual (multiplier) update so that linear objectives converge as well. This is
the classical operator-splitting recipe: no interior-point factorizations,
moderate accuracy, and full tolerance of redundant constraint rows.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DimensionMismatch, StructuralError

SYMMETRY_TOL = 1e-12
PSD_CLAMP_TOL = 1e-8


class MultiBlockSdp:
    """A multi-block SDP built incrementally from scalar entries.

    Parameters
    ----------
    blocks : iterable of int
        Side lengths of the PSD blocks.

    Entries are written with ``set_cost`` and ``add_entry``, whose (i, j)
    coefficient always means "coeff times X[i, j]" for a symmetric X; the
    symmetric counterpart is stored automatically. Redundant rows are fine.
    """

    def __init__(self, blocks):
        self.blocks = [int(s) for s in blocks]
        if any(s < 1 for s in self.blocks):
            raise StructuralError(f"block sizes must be positive, got {self.blocks}")
        self._offsets = np.concatenate(
            ([0], np.cumsum([s * s for s in self.blocks]))
        ).astype(np.int64)
        self.dim = int(self._offsets[-1])
        self._cost = {}
        self._rows = []
        self._rhs = []
        self._compiled = None

    @property
    def num_rows(self):
        return len(self._rhs)

    def _flat(self, block, i, j):
        if not 0 <= block < len(self.blocks):
            raise StructuralError(f"block index {block} out of range")
        s = self.blocks[block]
        if not (0 <= i < s and 0 <= j < s):
            raise StructuralError(
                f"entry ({i}, {j}) out of range for block {block} of side {s}"
            )
        return int(self._offsets[block]) + i * s + j

    def _accumulate(self, store, block, i, j, coeff):
        c = float(coeff)
        if c == 0.0:
            return
        if i == j:
            k = self._flat(block, i, j)
            store[k] = store.get(k, 0.0) + c
        else:
            ka = self._flat(block, i, j)
            kb = self._flat(block, j, i)
            store[ka] = store.get(ka, 0.0) + 0.5 * c
            store[kb] = store.get(kb, 0.0) + 0.5 * c

    def set_cost(self, block, i, j, coeff):
        """Accumulate coeff * X_block[i, j] into the objective."""
        self._accumulate(self._cost, block, i, j, coeff)
        self._compiled = None

    def new_row(self, rhs):
        """Open a new equality row with right-hand side rhs; returns its index."""
        self._rows.append({})
        self._rhs.append(float(rhs))
        self._compiled = None
        return len(self._rhs) - 1

    def add_entry(self, row, block, i, j, coeff):
        """Accumulate coeff * X_block[i, j] into constraint row ``row``."""
        if not 0 <= row < len(self._rows):
            raise StructuralError(f"row index {row} out of range")
        self._accumulate(self._rows[row], block, i, j, coeff)
        self._compiled = None

    def add_symmetric(self, row, block, mat):
        """Accumulate a dense symmetric coefficient matrix into a row."""
        m = np.asarray(mat, dtype=float)
        s = self.blocks[block]
        if m.shape != (s, s):
            raise DimensionMismatch(
                f"matrix of shape {m.shape} for block {block} of side {s}"
            )
        if np.abs(m - m.T).max() > SYMMETRY_TOL * max(1.0, np.abs(m).max()):
            raise StructuralError("constraint matrix is not symmetric")
        base = int(self._offsets[block])
        entries = self._rows[row]
        for i in range(s):
            for j in range(s):
                v = m[i, j]
                if v != 0.0:
                    k = base + i * s + j
                    entries[k] = entries.get(k, 0.0) + v

    @classmethod
    def from_dense(cls, blocks, cost, rows, rhs):
        """Build from dense per-block matrices.

        Args:
            blocks: block side lengths.
            cost: list of symmetric cost matrices, one per block.
            rows: list of constraint rows, each a list of per-block matrices
                (None for a block that does not participate).
            rhs: right-hand-side vector, one entry per row.
        """
        prog = cls(blocks)
        if len(cost) != len(prog.blocks):
            raise DimensionMismatch("one cost matrix per block is required")
        for k, mat in enumerate(cost):
            if mat is None:
                continue
            m = np.asarray(mat, dtype=float)
            s = prog.blocks[k]
            if m.shape != (s, s):
                raise DimensionMismatch(
                    f"cost matrix {k} has shape {m.shape}, expected {(s, s)}"
                )
            if np.abs(m - m.T).max() > SYMMETRY_TOL * max(1.0, np.abs(m).max()):
                raise StructuralError(f"cost matrix {k} is not symmetric")
            base = int(prog._offsets[k])
            for i in range(s):
                for j in range(s):
                    if m[i, j] != 0.0:
                        prog._cost[base + i * s + j] = m[i, j]
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        if len(rows) != rhs.size:
            raise DimensionMismatch("one rhs entry per constraint row is required")
        for row_mats, bj in zip(rows, rhs):
            r = prog.new_row(bj)
            if len(row_mats) != len(prog.blocks):
                raise DimensionMismatch("one matrix per block per row (None allowed)")
            for k, mat in enumerate(row_mats):
                if mat is None:
                    continue
                prog.add_symmetric(r, k, mat)
        return prog

    def compile(self):
        """Materialize (A, b, c) with A in CSR over the stacked block vec."""
        if self._compiled is None:
            m = len(self._rhs)
            data, cols, indptr = [], [], [0]
            for entries in self._rows:
                for k in sorted(entries):
                    cols.append(k)
                    data.append(entries[k])
                indptr.append(len(cols))
            amat = sp.csr_matrix(
                (np.asarray(data, dtype=float), cols, indptr),
                shape=(m, self.dim),
            )
            bvec = np.asarray(self._rhs, dtype=float)
            cvec = np.zeros(self.dim)
            for k, v in self._cost.items():
                cvec[k] = v
            self._compiled = (amat, bvec, cvec)
        return self._compiled

    def block_slices(self):
        return [
            slice(int(self._offsets[k]), int(self._offsets[k + 1]))
            for k in range(len(self.blocks))
        ]

    def split(self, vec):
        """Split a stacked vec into per-block square matrices."""
        out = []
        for k, s in enumerate(self.blocks):
            a = int(self._offsets[k])
            out.append(np.asarray(vec[a : a + s * s], dtype=float).reshape(s, s))
        return out

    def stack(self, mats):
        """Inverse of split: stack per-block matrices into one vec."""
        if len(mats) != len(self.blocks):
            raise DimensionMismatch("one matrix per block")
        parts = []
        for k, m in enumerate(mats):
            a = np.asarray(m, dtype=float)
            s = self.blocks[k]
            if a.shape != (s, s):
                raise DimensionMismatch(
                    f"block {k} has shape {a.shape}, expected {(s, s)}"
                )
            parts.append(a.reshape(-1))
        return np.concatenate(parts)


class SdpSolution:
    """Result of one solve: primal blocks, duals, objective, diagnostics."""

    __slots__ = (
        "X",
        "y",
        "S",
        "objective",
        "residuals",
        "status",
        "iterations",
        "history",
        "certificate",
    )

    def __init__(self, X, y, S, objective, residuals, status, iterations, history,
                 certificate=None):
        self.X = X
        self.y = y
        self.S = S
        self.objective = objective
        self.residuals = residuals
        self.status = status
        self.iterations = iterations
        self.history = history
        self.certificate = certificate

    def __repr__(self):
        ep, ed, eg = self.residuals
        return (
            f"SdpSolution(status={self.status}, objective={self.objective:.6g}, "
            f"residuals=({ep:.2e}, {ed:.2e}, {eg:.2e}), iters={self.iterations})"
        )


def _group_blocks(blocks, offsets):
    """Group block indices by side length for batched eigendecomposition."""
    groups = {}
    for k, s in enumerate(blocks):
        groups.setdefault(s, []).append(k)
    out = []
    for s, idxs in sorted(groups.items()):
        starts = np.array([offsets[k] for k in idxs], dtype=np.int64)
        gather = (starts[:, None] + np.arange(s * s)[None, :]).reshape(-1)
        out.append((s, gather))
    return out


def _project_psd(vec, groups, clamp_floor=0.0):
    """Project the stacked block vec onto the PSD cone (eigenvalue clamping)."""
    out = vec.copy()
    for s, gather in groups:
        flat = vec[gather].reshape(-1, s, s)
        if s == 1:
            proj = np.maximum(flat, clamp_floor)
        else:
            sym = 0.5 * (flat + flat.transpose(0, 2, 1))
            vals, vecs = np.linalg.eigh(sym)
            vals = np.maximum(vals, clamp_floor)
            proj = (vecs * vals[:, None, :]) @ vecs.transpose(0, 2, 1)
        out[gather] = proj.reshape(-1)
    return out


def _max_eig(vec, groups):
    top = -np.inf
    for s, gather in groups:
        flat = vec[gather].reshape(-1, s, s)
        if s == 1:
            top = max(top, float(flat.max()))
        else:
            sym = 0.5 * (flat + flat.transpose(0, 2, 1))
            vals = np.linalg.eigvalsh(sym)
            top = max(top, float(vals.max()))
    return top


def kkt_residuals(sdp: MultiBlockSdp, X, y, S):
    """Relative KKT residuals (primal, dual, gap) of a candidate triple.

    eta_p = ||A(X) - b|| / (1 + ||b||)
    eta_d = ||A*(y) + S - C|| / (1 + ||C||)
    eta_g = |<C, X> - <b, y>| / (1 + |<C, X>| + |<b, y>|)
    """
    amat, bvec, cvec = sdp.compile()
    x = sdp.stack(X)
    s = sdp.stack(S)
    y = np.asarray(y, dtype=float)
    if y.shape != bvec.shape:
        raise DimensionMismatch(f"y has shape {y.shape}, expected {bvec.shape}")
    eta_p = np.linalg.norm(amat @ x - bvec) / (1.0 + np.linalg.norm(bvec))
    eta_d = np.linalg.norm(amat.T @ y + s - cvec) / (1.0 + np.linalg.norm(cvec))
    cx = float(cvec @ x)
    by = float(bvec @ y)
    eta_g = abs(cx - by) / (1.0 + abs(cx) + abs(by))
    return (float(eta_p), float(eta_d), float(eta_g))


def solve(
    sdp: MultiBlockSdp,
    tol: float = 1e-7,
    max_iter: int = 100_000,
    rho: float = 1.0,
    over_relax: float = 1.7,
    check_every: int = 25,
    warm=None,
    adapt_every: int = 100,
    deadline_s=None,
) -> SdpSolution:
    """Solve a multi-block SDP to moderate accuracy.

    Returns a solution whose status is Optimal when all three relative KKT
    residuals fall at or below tol, MaxIter when the iteration budget ran out
    first, and Infeasible when a Farkas-type certificate was found (the
    normalized improving dual direction is attached as ``certificate``).

    ``warm`` optionally seeds the primal iterate with a list of blocks
    (e.g. a rank-one lift of a heuristic feasible point); duals start at
    zero. A good seed shortens the run and pins down which of several
    equivalent optima the iteration drifts toward, but never changes what
    qualifies as Optimal.

    ``adapt_every`` controls the residual-balancing penalty update: the
    stride in iterations, or 0 to freeze the penalty at ``rho``. Freezing
    helps on problems where a long flat valley makes the balance heuristic
    misjudge the right scale.

    ``deadline_s`` caps the wall-clock time; when it expires the best
    iterate so far is returned with status MaxIter, same as an exhausted
    iteration budget.

    The returned X is the cone-side iterate, so its blocks are PSD up to
    eigensolver roundoff regardless of status. With deadline_s=None (the
    default) fixed iteration counts give bit-identical reruns; there is no
    randomized logic.
    """
    amat, bvec, cvec = sdp.compile()
    m, n = amat.shape
    groups = _group_blocks(sdp.blocks, sdp._offsets)

    if m == 0:
        zero = np.zeros(n)
        resid = kkt_residuals(sdp, sdp.split(zero), np.zeros(0), sdp.split(cvec))
        return SdpSolution(
            sdp.split(zero), np.zeros(0), sdp.split(cvec.copy()), 0.0, resid,
            "Optimal", 0, [],
        )

    # Row equilibration and cost scaling; all residuals are reported on the
    # original data, scaling only shapes the iteration.
    row_norm = np.sqrt(np.asarray(amat.multiply(amat).sum(axis=1)).ravel())
    bad = row_norm <= 0.0
    if np.any(bad & (np.abs(bvec) > 0.0)):
        j = int(np.argmax(bad & (np.abs(bvec) > 0.0)))
        cert = np.zeros(m)
        cert[j] = np.sign(bvec[j])
        return SdpSolution(
            sdp.split(np.zeros(n)), np.zeros(m), sdp.split(cvec.copy()),
            0.0, (np.inf, 0.0, np.inf), "Infeasible", 0, [], certificate=cert,
        )
    row_norm[bad] = 1.0
    dinv = sp.diags(1.0 / row_norm)
    a_s = (dinv @ amat).tocsr()
    b_s = bvec / row_norm
    cost_scale = max(1.0, float(np.linalg.norm(cvec)))
    c_s = cvec / cost_scale

    gram = (a_s @ a_s.T).tocsc()
    gram = gram + sp.identity(m, format="csc") * 1e-10
    factor = splu(gram)

    def affine_project(v):
        q = factor.solve(b_s - a_s @ v)
        return v + a_s.T @ q, q

    if warm is None:
        x = np.zeros(n)
        z = np.zeros(n)
    else:
        z = sdp.stack(warm)
        x = z.copy()
    u = np.zeros(n)
    q = np.zeros(m)
    rho_now = float(rho)
    history = []
    status = "MaxIter"
    certificate = None
    best = None
    it = 0

    b_norm = 1.0 + np.linalg.norm(bvec)
    c_norm = 1.0 + np.linalg.norm(cvec)
    t_start = time.perf_counter() if deadline_s is not None else None

    for it in range(1, max_iter + 1):
        v = z - u - c_s / rho_now
        x, q = affine_project(v)
        x_hat = over_relax * x + (1.0 - over_relax) * z
        w = x_hat + u
        z_prev = z
        z = _project_psd(w, groups)
        u = u + x_hat - z

        if it % check_every == 0 or it == max_iter:
            y_s = rho_now * q
            y = cost_scale * (y_s / row_norm)
            s_vec = cost_scale * rho_now * (z - w)
            eta_p = np.linalg.norm(row_norm * (a_s @ z) - bvec) / b_norm
            eta_d = np.linalg.norm(amat.T @ y + s_vec - cvec) / c_norm
            cx = float(cvec @ z)
            by = float(bvec @ y)
            eta_g = abs(cx - by) / (1.0 + abs(cx) + abs(by))
            history.append((it, cx, eta_p, eta_d, eta_g))
            worst = max(eta_p, eta_d, eta_g)
            if best is None or worst < best[0]:
                best = (worst, z.copy(), y.copy(), s_vec.copy(), (eta_p, eta_d, eta_g))
            if worst <= tol:
                status = "Optimal"
                break
            if t_start is not None and time.perf_counter() - t_start > deadline_s:
                break
            if eta_p > 100.0 * tol and it >= 8 * check_every:
                y_norm = np.linalg.norm(y_s)
                if y_norm > 0:
                    y_dir = y_s / y_norm
                    gain = float(b_s @ y_dir)
                    if gain > 1e-6:
                        dir_vec = a_s.T @ y_dir
                        top = _max_eig(dir_vec, groups)
                        scale = max(1.0, float(np.linalg.norm(dir_vec)))
                        if top <= 1e-9 * scale:
                            status = "Infeasible"
                            certificate = y_dir / row_norm
                            certificate /= np.linalg.norm(certificate)
                            break

        if adapt_every > 0 and it % adapt_every == 0 and it < max_iter // 2:
            r_p = np.linalg.norm(x - z)
            r_d = rho_now * np.linalg.norm(z - z_prev)
            if r_p > 10.0 * r_d and rho_now < 1e4:
                rho_now *= 2.0
                u *= 0.5
            elif r_d > 10.0 * r_p and rho_now > 1e-4:
                rho_now *= 0.5
                u *= 2.0

    if status == "Infeasible":
        return SdpSolution(
            sdp.split(z), np.zeros(m), sdp.split(np.zeros(n)), float(cvec @ z),
            (np.inf, 0.0, np.inf), status, it, history, certificate=certificate,
        )

    worst, z_best, y_best, s_best, resid = best
    return SdpSolution(
        sdp.split(z_best),
        y_best,
        sdp.split(s_best),
        float(cvec @ z_best),
        resid,
        status,
        it,
        history,
    )


def dump_program(sdp: MultiBlockSdp) -> str:
    """Serialize a program in a plain sparse text format.

    Layout: a ``blocks`` line, a ``b`` line, one ``c <block> <i> <j> <val>``
    line per cost entry, and one ``a <row> <block> <i> <j> <val>`` line per
    constraint entry. Suitable for diffing or feeding an external solver.
    """
    amat, bvec, cvec = sdp.compile()
    lines = ["blocks " + " ".join(str(s) for s in sdp.blocks)]
    lines.append("b " + " ".join(repr(float(v)) for v in bvec))

    def locate(flat):
        for k, s in enumerate(sdp.blocks):
            a = int(sdp._offsets[k])
            if a <= flat < a + s * s:
                off = flat - a
                return k, off // s, off % s
        raise StructuralError(f"flat index {flat} out of range")

    for flat in np.nonzero(cvec)[0]:
        k, i, j = locate(int(flat))
        lines.append(f"c {k} {i} {j} {float(cvec[flat])!r}")
    coo = amat.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for r, cidx, val in zip(coo.row[order], coo.col[order], coo.data[order]):
        k, i, j = locate(int(cidx))
        lines.append(f"a {r} {k} {i} {j} {float(val)!r}")
    return "\n".join(lines) + "\n"


def load_program(text: str) -> MultiBlockSdp:
    """Parse the format written by dump_program."""
    blocks = None
    bvec = None
    cost_entries = []
    row_entries = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] == "blocks":
            blocks = [int(t) for t in tokens[1:]]
        elif tokens[0] == "b":
            bvec = [float(t) for t in tokens[1:]]
        elif tokens[0] == "c":
            k, i, j = (int(t) for t in tokens[1:4])
            cost_entries.append((k, i, j, float(tokens[4])))
        elif tokens[0] == "a":
            r, k, i, j = (int(t) for t in tokens[1:5])
            row_entries.append((r, k, i, j, float(tokens[5])))
        else:
            raise StructuralError(f"unknown record {tokens[0]!r}")
    if blocks is None or bvec is None:
        raise StructuralError("dump lacks a blocks or b line")
    prog = MultiBlockSdp(blocks)
    for rhs in bvec:
        prog.new_row(rhs)
    base = prog._offsets
    for k, i, j, val in cost_entries:
        prog._cost[int(base[k]) + i * prog.blocks[k] + j] = val
    for r, k, i, j, val in row_entries:
        entries = prog._rows[r]
        flat = int(base[k]) + i * prog.blocks[k] + j
        entries[flat] = entries.get(flat, 0.0) + val
    prog._compiled = None
    return prog
