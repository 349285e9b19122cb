"""Moment lift of a bilinear QCQP and its LP / SOCP relaxations.

The lifted matrix ``Wb`` has rows/columns ``0..N`` where index 0 is the
homogenizing coordinate and index ``k + 1`` is QCQP variable ``k``.  Only a
subset of its upper-triangle entries is materialized: ``(0, 0)``, the first
row ``(0, k)``, the diagonal ``(k, k)``, and the off-diagonal pairs that occur
in some quadratic term (or every pair when requested).  Entries that are not
materialized are zero.

Every constraint is written homogeneously as ``R Wb <= 0`` where ``R`` acts
on the flat entry vector; ``Wb[0, 0] = 1`` closes the lift.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .conic.ipm import SolverConfig
from .conic.program import make_program
from .qcqp import BAND

LP = "LP"
SOCP = "SOCP"

DENSE_EIG_LIMIT = 4000
POWER_TOL = 1e-10
POWER_MAXITER = 10000

# objective agreement between relaxations needs a tighter dual residual and gap
# than the solver defaults; primal feasibility stays at the default
RELAX_CONFIG = SolverConfig(tol_gap=1e-10, tol_feas_dual=1e-10)


class RelaxError(RuntimeError):
    """Raised when a lift assumption fails or an eigen-iteration stalls."""


@dataclass(frozen=True)
class MomentModel:
    """Lifted rows and objective over the materialized entries of ``Wb``.

    ``entries`` is an ``(E, 2)`` array of ``(i, j)`` with ``i <= j`` sorted
    lexicographically.  ``rows`` is an ``(K, E)`` CSR matrix: constraint
    ``k`` reads ``rows[k] @ w <= 0``.  ``objective`` has length ``E``.
    """

    dim: int
    entries: np.ndarray
    rows: sp.csr_matrix
    objective: np.ndarray
    row_origin: np.ndarray
    row_kind: tuple
    qcqp: object = field(compare=False, repr=False)

    @property
    def n_entries(self):
        return len(self.entries)

    def index(self, i, j):
        """Flat position of entry ``(i, j)`` or -1 when not materialized."""
        i, j = (i, j) if i <= j else (j, i)
        key = i * self.dim + j
        keys = self.entries[:, 0] * self.dim + self.entries[:, 1]
        pos = int(np.searchsorted(keys, key))
        if pos < len(keys) and keys[pos] == key:
            return pos
        return -1

    def indices(self, ii, jj):
        ii, jj = np.minimum(ii, jj), np.maximum(ii, jj)
        keys = self.entries[:, 0] * self.dim + self.entries[:, 1]
        want = np.asarray(ii, dtype=np.int64) * self.dim + np.asarray(jj, dtype=np.int64)
        pos = np.searchsorted(keys, want)
        pos = np.minimum(pos, len(keys) - 1)
        return np.where(keys[pos] == want, pos, -1)

    @property
    def diag_index(self):
        return self.indices(np.arange(self.dim), np.arange(self.dim))

    @property
    def offdiag(self):
        return np.flatnonzero(self.entries[:, 0] != self.entries[:, 1])

    def to_matrix(self, w, dense=True):
        """Symmetric ``Wb`` from flat entry values (absent entries are zero)."""
        i, j = self.entries[:, 0], self.entries[:, 1]
        M = sp.coo_matrix((w, (i, j)), shape=(self.dim, self.dim)).tocsr()
        M = M + sp.triu(M, k=1).T
        return M.toarray() if dense else M.tocsr()

    def rank_one(self, x):
        """Flat entries of ``(1, x)(1, x)^T``."""
        z = np.r_[1.0, np.asarray(x, dtype=float)]
        return z[self.entries[:, 0]] * z[self.entries[:, 1]]

    def first_row(self, w):
        """QCQP variable values read off ``Wb[0, 1:]``."""
        return np.asarray(w)[self.indices(np.zeros(self.dim - 1, dtype=np.int64), np.arange(1, self.dim))]

    def row_values(self, w):
        return self.rows @ w

    def objective_value(self, w):
        return float(self.objective @ w)


def lift(qp, all_pairs=False):
    """Moment model of ``qp``; see the module docstring for the entry set."""
    N = qp.n_total
    dim = N + 1
    ar = np.arange(1, dim)
    base = [np.c_[[0], [0]], np.c_[np.zeros(N, dtype=np.int64), ar], np.c_[ar, ar]]
    if all_pairs:
        iu, ju = np.triu_indices(N, k=1)
        base.append(np.c_[iu + 1, ju + 1])
    else:
        base.append(qp.support_pairs() + 1)
    entries = np.unique(np.vstack(base).astype(np.int64), axis=0)
    keys = entries[:, 0] * dim + entries[:, 1]

    def locate(ii, jj):
        return np.searchsorted(keys, np.asarray(ii, dtype=np.int64) * dim + np.asarray(jj, dtype=np.int64))

    e00 = 0
    first = locate(np.zeros(N, dtype=np.int64), ar)

    # objective
    obj = np.zeros(len(entries))
    obj[e00] += qp.obj_const
    obj[first] += qp.c
    oi, oj, ov = (np.asarray(a) for a in qp.obj_quad)
    if len(ov):
        np.add.at(obj, locate(oi.astype(np.int64) + 1, oj.astype(np.int64) + 1), ov)

    # per-QCQP-row triplets on entries: f_k(W) = const W00 + lin W0j + quad Wij
    nrow = qp.n_rows
    r_rows = np.r_[np.arange(nrow), qp.lin_row, qp.quad_row]
    r_cols = np.r_[np.full(nrow, e00), first[qp.lin_j], locate(qp.quad_i + 1, qp.quad_j + 1)]
    r_vals = np.r_[qp.const, qp.lin_val, qp.quad_val]
    F = sp.csr_matrix((r_vals, (r_rows, r_cols)), shape=(nrow, len(entries)))

    band = np.flatnonzero(qp.sense == BAND)
    le = np.flatnonzero(qp.sense != BAND)
    lam_cols = first[qp.lam_index[band]]
    lam = sp.csr_matrix((np.ones(len(band)), (np.arange(len(band)), lam_cols)), shape=(len(band), len(entries)))
    blocks = [F[band] - lam, -F[band] - lam, F[le]]
    origin = [band, band, le]
    kinds = ["band_upper"] * len(band) + ["band_lower"] * len(band) + ["le"] * len(le)

    # bounds: lb W00 - W0k <= 0 and W0k - ub W00 <= 0
    lb_idx = np.flatnonzero(np.isfinite(qp.lb))
    ub_idx = np.flatnonzero(np.isfinite(qp.ub))
    B_lo = sp.csr_matrix(
        (np.r_[qp.lb[lb_idx], -np.ones(len(lb_idx))],
         (np.r_[np.arange(len(lb_idx)), np.arange(len(lb_idx))], np.r_[np.full(len(lb_idx), e00), first[lb_idx]])),
        shape=(len(lb_idx), len(entries)),
    )
    B_hi = sp.csr_matrix(
        (np.r_[-qp.ub[ub_idx], np.ones(len(ub_idx))],
         (np.r_[np.arange(len(ub_idx)), np.arange(len(ub_idx))], np.r_[np.full(len(ub_idx), e00), first[ub_idx]])),
        shape=(len(ub_idx), len(entries)),
    )
    blocks += [B_lo, B_hi]
    origin += [lb_idx, ub_idx]
    kinds += ["lower_bound"] * len(lb_idx) + ["upper_bound"] * len(ub_idx)
    R = sp.vstack(blocks).tocsr()
    R.eliminate_zeros()
    R.sort_indices()
    return MomentModel(dim, entries, R, obj, np.concatenate(origin).astype(np.int64), tuple(kinds), qp)


def _pair_generators(mm):
    """Entries of every off-diagonal pair and of its two diagonal partners."""
    off = mm.offdiag
    di = mm.diag_index
    return off, di[mm.entries[off, 0]], di[mm.entries[off, 1]]


def make_lp(mm):
    """LP over the dual of the diagonally dominant cone plus the lifted rows."""
    E = mm.n_entries
    off, ii, jj = _pair_generators(mm)
    npair = len(off)
    diag = mm.diag_index
    # G w + s = h, s >= 0
    D = sp.csr_matrix((-np.ones(len(diag)), (np.arange(len(diag)), diag)), shape=(len(diag), E))
    r = np.arange(npair)
    rows = np.r_[r, r, r, r + npair, r + npair, r + npair]
    cols = np.r_[ii, jj, off, ii, jj, off]
    vals = np.r_[-np.ones(2 * npair), -2.0 * np.ones(npair), -np.ones(2 * npair), 2.0 * np.ones(npair)]
    P = sp.csr_matrix((vals, (rows, cols)), shape=(2 * npair, E))
    G = sp.vstack([mm.rows, D, P]).tocsr()
    A = sp.csr_matrix(([1.0], ([0], [0])), shape=(1, E))
    meta = {"moment": mm, "n_lifted_rows": mm.rows.shape[0], "n_pairs": npair}
    return make_program(mm.objective, A, [1.0], G, np.zeros(G.shape[0]), G.shape[0], (), kind=LP, meta=meta)


def make_socp(mm):
    """SOCP with one three-dimensional cone per materialized off-diagonal pair."""
    E = mm.n_entries
    off, ii, jj = _pair_generators(mm)
    npair = len(off)
    diag = mm.diag_index
    D = sp.csr_matrix((-np.ones(len(diag)), (np.arange(len(diag)), diag)), shape=(len(diag), E))
    base = 3 * np.arange(npair)
    # cone (Wii + Wjj, Wii - Wjj, 2 Wij); G = -that, h = 0
    rows = np.r_[base, base, base + 1, base + 1, base + 2]
    cols = np.r_[ii, jj, ii, jj, off]
    vals = np.r_[-np.ones(2 * npair), -np.ones(npair), np.ones(npair), -2.0 * np.ones(npair)]
    C = sp.csr_matrix((vals, (rows, cols)), shape=(3 * npair, E))
    G = sp.vstack([mm.rows, D, C]).tocsr()
    A = sp.csr_matrix(([1.0], ([0], [0])), shape=(1, E))
    meta = {"moment": mm, "n_lifted_rows": mm.rows.shape[0], "n_pairs": npair}
    l = mm.rows.shape[0] + len(diag)
    return make_program(mm.objective, A, [1.0], G, np.zeros(G.shape[0]), l, [3] * npair, kind=SOCP, meta=meta)


def lp_row_violation(mm, w):
    """Largest violation of the diagonal and pairwise LP rows at ``w``."""
    off, ii, jj = _pair_generators(mm)
    d = w[mm.diag_index]
    worst = max(0.0, float(-d.min()))
    if len(off):
        slack = w[ii] + w[jj] - 2.0 * np.abs(w[off])
        worst = max(worst, float(-slack.min()))
    return worst


def soc_violation(mm, w):
    """Largest ``||(Wii - Wjj, 2 Wij)|| - (Wii + Wjj)`` over pairs."""
    off, ii, jj = _pair_generators(mm)
    if not len(off):
        return 0.0
    gap = np.hypot(w[ii] - w[jj], 2.0 * w[off]) - (w[ii] + w[jj])
    return max(0.0, float(gap.max()))


# ---------------------------------------------------------------------------
# PSD completion
# ---------------------------------------------------------------------------

def _lambda_max(M, tol=POWER_TOL, maxiter=POWER_MAXITER):
    n = M.shape[0]
    if n <= DENSE_EIG_LIMIT:
        Md = M.toarray() if sp.issparse(M) else np.asarray(M)
        return float(sla.eigvalsh(Md, subset_by_index=[n - 1, n - 1])[0]), {"method": "dense"}
    # shifted power iteration: the shift makes the largest eigenvalue dominant
    op = sp.csr_matrix(M)
    shift = float(abs(op).sum(axis=1).max())
    rng = np.random.Generator(np.random.PCG64(0))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, maxiter + 1):
        y = op @ v + shift * v
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return -shift, {"method": "power", "iters": it}
        v_new = y / nrm
        new_est = float(v_new @ (op @ v_new))
        if abs(new_est - est) <= tol * max(1.0, abs(new_est)):
            return new_est, {"method": "power", "iters": it}
        v, est = v_new, new_est
    raise RelaxError(f"power iteration did not converge in {maxiter} iterations (last estimate {est:.6g})")


@dataclass
class Completion:
    """Result of the diagonal shift that makes a lifted point PSD."""

    alpha: float
    w_plus: np.ndarray
    lambda_min: float
    objective_change: float
    info: dict


def complete_to_psd(mm, w, margin=1e-9):
    """Shift the body diagonal of ``Wb`` so the whole matrix becomes PSD.

    ``alpha`` is the largest eigenvalue of ``w w^T / w00 - W`` (clipped at 0)
    plus a small relative margin; the shift leaves every lifted row and the
    objective unchanged because none of them has a body-diagonal term.
    """
    w = np.asarray(w, dtype=float)
    d = mm.diag_index
    nz_diag = mm.rows[:, d[1:]]
    if nz_diag.nnz or np.any(mm.objective[d[1:]] != 0):
        raise RelaxError("lifted data has body-diagonal terms; the shift argument does not apply")
    Wb = mm.to_matrix(w, dense=mm.dim <= DENSE_EIG_LIMIT)
    w00 = float(w[0])
    if w00 <= 0:
        raise RelaxError("Wb[0, 0] must be positive")
    if sp.issparse(Wb):
        first = Wb[0, 1:].toarray().ravel()
        M = sp.csr_matrix(np.outer(first, first) / w00) - Wb[1:, 1:]
    else:
        first = Wb[0, 1:]
        M = np.outer(first, first) / w00 - Wb[1:, 1:]
    lmax, info = _lambda_max(M)
    scale = max(1.0, abs(lmax), float(np.abs(w).max()))
    alpha = max(lmax, 0.0) + margin * scale
    w_plus = w.copy()
    w_plus[d[1:]] += alpha
    Wp = mm.to_matrix(w_plus, dense=True)
    lam_min = float(sla.eigvalsh(Wp, subset_by_index=[0, 0])[0])
    info.update({"lambda_max_shifted": lmax})
    change = mm.objective_value(w_plus) - mm.objective_value(w)
    return Completion(alpha, w_plus, lam_min, change, info)


# ---------------------------------------------------------------------------
# reduced dual
# ---------------------------------------------------------------------------

@dataclass
class ReducedDual:
    """Reduced dual LP (maximize ``mu``) written as a minimization program."""

    program: object
    n_eta: int
    n_dropped: int


def dual_reduce(mm, dedupe=True):
    """LP whose optimal ``mu`` equals the LP-relaxation optimum.

    Variables are ``(eta, mu, s00)``.  Constraints:
    ``obj00 + sum eta_k R_k00 - mu - s00 >= 0``; for every off-diagonal entry
    ``obj_e + sum eta_k R_ke = 0``; ``eta >= 0``; ``s00 >= 0``.  The program
    minimizes ``-mu``.  Identical equality rows are merged when ``dedupe``.
    """
    d = mm.diag_index
    R = mm.rows.tocsc()
    if R[:, d[1:]].nnz or np.any(mm.objective[d[1:]] != 0):
        raise RelaxError("nonzero diagonal coefficient: the reduction needs zero-diagonal quadratic rows")
    K = R.shape[0]
    off = mm.offdiag
    RT = R.T.tocsr()
    Aeq = RT[off]
    beq = -mm.objective[off]
    n_dropped = 0
    if dedupe and Aeq.shape[0]:
        Aeq, beq, n_dropped = _merge_duplicate_rows(Aeq, beq)
    nv = K + 2
    mu, s00 = K, K + 1
    A = sp.hstack([Aeq, sp.csr_matrix((Aeq.shape[0], 2))]).tocsr()
    # -(obj00 + R00^T eta - mu - s00) <= 0
    r00 = RT[0].toarray().ravel()
    g0 = np.r_[-r00, 1.0, 1.0]
    Gnn = sp.csr_matrix((-np.ones(K + 1), (np.arange(K + 1), np.r_[np.arange(K), s00])), shape=(K + 1, nv))
    G = sp.vstack([sp.csr_matrix(g0.reshape(1, -1)), Gnn]).tocsr()
    h = np.r_[mm.objective[0], np.zeros(K + 1)]
    c = np.zeros(nv)
    c[mu] = -1.0
    prog = make_program(c, A, beq, G, h, G.shape[0], (), kind="LP",
                        meta={"moment": mm, "mu_index": mu, "n_eta": K})
    return ReducedDual(prog, K, n_dropped)


def _merge_duplicate_rows(A, b):
    """Drop rows that repeat an earlier row exactly after scaling by the first entry."""
    A = A.tocsr()
    A.sort_indices()
    seen = {}
    keep = []
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        if lo == hi:
            if b[r] != 0:
                keep.append(r)  # inconsistent empty row; keep so infeasibility stays visible
            continue
        piv = A.data[lo]
        key = (A.indices[lo:hi].tobytes(), (A.data[lo:hi] / piv).tobytes(), b[r] / piv)
        if key in seen:
            continue
        seen[key] = r
        keep.append(r)
    keep = np.array(keep, dtype=np.int64)
    return A[keep], b[keep], A.shape[0] - len(keep)


# ---------------------------------------------------------------------------
# convenience driver
# ---------------------------------------------------------------------------

@dataclass
class RelaxResult:
    """Solved relaxation with the values read back in QCQP coordinates."""

    kind: str
    status: str
    objective: float
    w: np.ndarray
    x: np.ndarray
    solution: object
    program: object
    moment: MomentModel
    seconds: float
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.solution.optimal

    @property
    def usable(self):
        return self.solution.usable


def solve_relaxation(qp, kind=LP, backend="reference", config=None, all_pairs=False, mm=None):
    """Lift, build the LP or SOCP program, solve, and read the first row."""
    from .conic.backends import get_backend

    t0 = time.perf_counter()
    mm = mm if mm is not None else lift(qp, all_pairs=all_pairs)
    prog = make_lp(mm) if kind == LP else make_socp(mm)
    sol = get_backend(backend).solve(prog, config or RELAX_CONFIG)
    w = sol.x
    x = mm.first_row(w) / max(w[0], 1e-300) if w is not None else None
    return RelaxResult(kind, sol.status, sol.obj, w, x, sol, prog, mm, time.perf_counter() - t0)
