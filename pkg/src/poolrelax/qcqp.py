"""Bilinear QCQP data model and the pooling penalty formulation.

A :class:`Qcqp` holds rows of the form ``f_k(x) = x^T Q_k x + q_k^T x + g_k``
with zero-diagonal ``Q_k``.  Each row has a sense:

* ``band``: ``-lam_k <= f_k(x) <= lam_k`` with a dedicated ``lam_k >= 0``
  variable priced at ``delta`` in the objective (relaxed equality);
* ``le``: ``f_k(x) <= 0``.

Quadratic terms are stored as triplets ``(row, i, j, coef)`` with ``i < j``
meaning ``coef * x_i * x_j`` (so ``Q_ij = Q_ji = coef / 2``).  Variables are
``x`` (the core block) followed by the ``lam`` block.
"""

from dataclasses import dataclass, field

import numpy as np

from .model import Instance, Schedule

BAND = 0
LE = 1

DEFAULT_DELTA = 1e-4


class QcqpError(ValueError):
    """Malformed QCQP data or inconsistent dimensions."""


@dataclass(frozen=True)
class Qcqp:
    """Bilinear QCQP with penalty bands; see the module docstring."""

    n: int
    n_lambda: int
    c: np.ndarray
    quad_row: np.ndarray
    quad_i: np.ndarray
    quad_j: np.ndarray
    quad_val: np.ndarray
    lin_row: np.ndarray
    lin_j: np.ndarray
    lin_val: np.ndarray
    const: np.ndarray
    sense: np.ndarray
    lam_index: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    obj_quad: tuple = ((), (), ())
    obj_const: float = 0.0
    delta: float = DEFAULT_DELTA
    row_family: tuple = ()
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        N = self.n + self.n_lambda
        if len(self.c) != N or len(self.lb) != N or len(self.ub) != N:
            raise QcqpError("objective or bounds length does not match variable count")
        if np.any(self.quad_i >= self.quad_j):
            raise QcqpError("quadratic terms must be strictly off-diagonal and stored with i < j")
        oi, oj, _ = self.obj_quad
        if any(a >= b for a, b in zip(oi, oj)):
            raise QcqpError("objective quadratic terms must be strictly off-diagonal")
        if np.any(self.lb > self.ub):
            raise QcqpError("lower bound exceeds upper bound")
        nrow = len(self.const)
        if len(self.sense) != nrow or len(self.lam_index) != nrow:
            raise QcqpError("row metadata lengths differ")
        for arr in (self.quad_i, self.quad_j, self.lin_j):
            if len(arr) and (arr.min() < 0 or arr.max() >= N):
                raise QcqpError("variable index out of range")
        band = self.sense == BAND
        if np.any(self.lam_index[band] < self.n) or np.any(self.lam_index[~band] != -1):
            raise QcqpError("band rows need a lambda index, inequality rows must not have one")

    @property
    def n_total(self):
        return self.n + self.n_lambda

    @property
    def n_rows(self):
        return len(self.const)

    @property
    def quad_rows(self):
        """Row indices that carry a quadratic part (the ``m`` rows)."""
        return np.unique(self.quad_row)

    def counts(self):
        """``(m, d, e)``: quadratic equalities, linear equalities, linear inequalities."""
        has_q = np.zeros(self.n_rows, dtype=bool)
        has_q[self.quad_row] = True
        band = self.sense == BAND
        return int(np.sum(has_q & band)), int(np.sum(~has_q & band)), int(np.sum(~band))

    def support_pairs(self):
        """Sorted unique ``(i, j)`` pairs appearing in any quadratic term."""
        oi, oj, _ = self.obj_quad
        ii = np.r_[self.quad_i, np.asarray(oi, dtype=np.int64)]
        jj = np.r_[self.quad_j, np.asarray(oj, dtype=np.int64)]
        if len(ii) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        return np.unique(np.c_[ii, jj], axis=0)


def eval_qcqp(qp, x, lam=None):
    """Objective, row values, and row violations at ``(x, lam)``.

    ``x`` may already include the lambda block when ``lam`` is None.
    """
    x = np.asarray(x, dtype=float)
    if lam is not None:
        x = np.r_[x, np.asarray(lam, dtype=float)]
    if len(x) != qp.n_total:
        raise QcqpError(f"expected {qp.n_total} values, got {len(x)}")
    rows = qp.const.astype(float).copy()
    np.add.at(rows, qp.quad_row, qp.quad_val * x[qp.quad_i] * x[qp.quad_j])
    np.add.at(rows, qp.lin_row, qp.lin_val * x[qp.lin_j])
    oi, oj, ov = (np.asarray(a) for a in qp.obj_quad)
    obj = float(qp.c @ x + qp.obj_const)
    if len(ov):
        obj += float(np.sum(ov * x[oi.astype(int)] * x[oj.astype(int)]))
    viol = np.empty_like(rows)
    band = qp.sense == BAND
    viol[band] = np.maximum(np.abs(rows[band]) - x[qp.lam_index[band]], 0.0)
    viol[~band] = np.maximum(rows[~band], 0.0)
    return obj, rows, viol


class QcqpBuilder:
    """Incremental row assembly; terms accumulate and are canonicalized on build."""

    def __init__(self, n, delta=DEFAULT_DELTA):
        if delta <= 0:
            raise QcqpError("penalty weight must be positive")
        self.n = int(n)
        self.delta = float(delta)
        self.c = np.zeros(self.n)
        self.lb = np.full(self.n, -np.inf)
        self.ub = np.full(self.n, np.inf)
        self.obj_quad = {}
        self.obj_const = 0.0
        self._quad = []
        self._lin = []
        self.const = []
        self.sense = []
        self.family = []
        self._row_quad = {}
        self._row_lin = {}
        self._row_const = 0.0

    # --- term accumulation for the row under construction ----------------
    def add(self, coef, u, w=None):
        """Add ``coef * u * w`` where ``u``/``w`` are ``("x", idx)`` or ``("c", value)``."""
        if coef == 0:
            return
        if w is None:
            w = ("c", 1.0)
        if u[0] == "c" and w[0] == "c":
            self._row_const += coef * u[1] * w[1]
        elif u[0] == "c" or w[0] == "c":
            k, var = (u[1], w[1]) if u[0] == "c" else (w[1], u[1])
            if k != 0:
                self._row_lin[var] = self._row_lin.get(var, 0.0) + coef * k
        else:
            i, j = sorted((u[1], w[1]))
            if i == j:
                raise QcqpError("squared terms are not allowed (zero-diagonal quadratic rows)")
            self._row_quad[(i, j)] = self._row_quad.get((i, j), 0.0) + coef

    def close_row(self, sense, family=""):
        """Finish the current row; returns its index or None when the row is empty."""
        quad = {k: v for k, v in self._row_quad.items() if v != 0}
        lin = {k: v for k, v in self._row_lin.items() if v != 0}
        const = self._row_const
        self._row_quad, self._row_lin, self._row_const = {}, {}, 0.0
        if not quad and not lin:
            if sense == BAND and const == 0:
                return None
            if sense == LE and const <= 0:
                return None
        r = len(self.const)
        self._quad.extend((r, i, j, v) for (i, j), v in sorted(quad.items()))
        self._lin.extend((r, j, v) for j, v in sorted(lin.items()))
        self.const.append(const)
        self.sense.append(sense)
        self.family.append(family)
        return r

    def row(self, quad=None, lin=None, const=0.0, sense=BAND, family=""):
        """Add a row from dicts ``{(i, j): coef}`` and ``{j: coef}``."""
        for (i, j), v in (quad or {}).items():
            self.add(v, ("x", i), ("x", j))
        for j, v in (lin or {}).items():
            self.add(v, ("x", j))
        self._row_const += const
        return self.close_row(sense, family)

    def build(self, meta=None):
        nrow = len(self.const)
        sense = np.array(self.sense, dtype=np.int8).reshape(-1)
        band_rows = np.flatnonzero(sense == BAND)
        n_lam = len(band_rows)
        lam_index = np.full(nrow, -1, dtype=np.int64)
        lam_index[band_rows] = self.n + np.arange(n_lam)
        c = np.r_[self.c, np.full(n_lam, self.delta)]
        lb = np.r_[self.lb, np.zeros(n_lam)]
        ub = np.r_[self.ub, np.full(n_lam, np.inf)]
        quad = np.array(self._quad, dtype=float).reshape(-1, 4)
        lin = np.array(self._lin, dtype=float).reshape(-1, 3)
        oq = sorted((k, v) for k, v in self.obj_quad.items() if v != 0)
        obj_quad = (tuple(k[0] for k, _ in oq), tuple(k[1] for k, _ in oq), tuple(v for _, v in oq))
        return Qcqp(
            n=self.n, n_lambda=n_lam, c=c,
            quad_row=quad[:, 0].astype(np.int64), quad_i=quad[:, 1].astype(np.int64),
            quad_j=quad[:, 2].astype(np.int64), quad_val=quad[:, 3].copy(),
            lin_row=lin[:, 0].astype(np.int64), lin_j=lin[:, 1].astype(np.int64), lin_val=lin[:, 2].copy(),
            const=np.array(self.const, dtype=float), sense=sense, lam_index=lam_index,
            lb=lb, ub=ub, obj_quad=obj_quad, obj_const=self.obj_const, delta=self.delta,
            row_family=tuple(self.family), meta=dict(meta or {}),
        )


class VarMap:
    """Position of every pooling variable inside the core ``x`` vector.

    Blocks in order: flows by step then arc; stocks for states ``1..MT-1``
    over sources and tanks followed by terminal tank stocks; plant qualities
    at step 0, then qualities for states ``1..MT-1`` over sources, tanks and
    plants, then terminal tank qualities; shortages by step over plants.
    """

    def __init__(self, inst):
        self.inst = inst
        MT, nA = inst.MT, inst.n_arcs
        ns, ni, npl = inst.n_source, inst.n_inter, inst.n_plant
        nsi = ns + ni
        self.n_a = MT * nA
        self.n_p = (MT - 1) * nsi + ni
        self.n_q = npl + (MT - 1) * (nsi + npl) + ni
        self.n_v = MT * npl
        self.off_p = self.n_a
        self.off_q = self.off_p + self.n_p
        self.off_v = self.off_q + self.n_q
        self.n = self.off_v + self.n_v

    def a(self, t, e):
        return ("x", t * self.inst.n_arcs + e)

    def p(self, t, i):
        inst = self.inst
        nsi = inst.n_source + inst.n_inter
        if t == 0:
            return ("c", float(inst.p1[i]))
        if t == inst.MT:
            if i < inst.n_source:
                return ("c", 0.0)
            return ("x", self.off_p + (inst.MT - 1) * nsi + (i - inst.n_source))
        return ("x", self.off_p + (t - 1) * nsi + i)

    def q(self, t, i):
        inst = self.inst
        npl = inst.n_plant
        nsi = inst.n_source + inst.n_inter
        is_plant = i >= nsi
        if t == 0:
            if is_plant:
                return ("x", self.off_q + inst.plant_index(i))
            return ("c", float(inst.q1[i]))
        if t == inst.MT:
            if i < inst.n_source:
                return ("c", 0.0)  # only ever multiplied by the zero terminal source stock
            if is_plant:
                raise QcqpError("plants have no terminal quality")
            return ("x", self.off_q + npl + (inst.MT - 1) * inst.V + (i - inst.n_source))
        return ("x", self.off_q + npl + (t - 1) * inst.V + i)

    def v(self, t, k):
        return ("x", self.off_v + t * self.inst.n_plant + k)

    def to_x(self, s):
        """Core vector of a schedule (values of the constant slots are dropped)."""
        inst = self.inst
        x = np.zeros(self.n)
        x[: self.n_a] = s.a.ravel()
        for t in range(1, inst.MT + 1):
            for i in inst.storage_nodes:
                ref = self.p(t, i)
                if ref[0] == "x":
                    x[ref[1]] = s.p[t, i]
        for t in range(inst.MT + 1):
            for i in range(inst.V):
                if t == inst.MT and i >= inst.n_source + inst.n_inter:
                    continue
                ref = self.q(t, i)
                if ref[0] == "x":
                    x[ref[1]] = s.q[t, i]
        x[self.off_v:] = s.v.ravel()
        return x

    def from_x(self, x, u_tol=1e-9):
        """Schedule holding the values of ``x``; constant slots are filled from data."""
        inst = self.inst
        s = Schedule.zeros(inst)
        s.a[:] = np.asarray(x[: self.n_a]).reshape(inst.MT, inst.n_arcs)
        for t in range(inst.MT + 1):
            for i in inst.storage_nodes:
                ref = self.p(t, i)
                s.p[t, i] = x[ref[1]] if ref[0] == "x" else ref[1]
            for i in range(inst.V):
                if t == inst.MT and i >= inst.n_source + inst.n_inter:
                    continue
                ref = self.q(t, i)
                s.q[t, i] = x[ref[1]] if ref[0] == "x" else ref[1]
        s.v[:] = np.asarray(x[self.off_v: self.n]).reshape(inst.MT, inst.n_plant)
        s.u[:] = (s.a > u_tol).astype(np.int8)
        return s


def eliminate_binaries(inst, t):
    """Pairwise-product terms replacing the one-pipeline rows at step ``t``.

    Returns a list with one entry per node: a list of ``(e, f)`` arc pairs whose
    flow product must vanish (entering pairs, leaving pairs, entering x leaving).
    The accompanying bound relaxation is ``0 <= a <= U``.
    """
    del t  # the pattern is the same at every step
    pairs = []
    for i in range(inst.V):
        ins, outs = inst.in_arcs[i], inst.out_arcs[i]
        node = [(ins[x], ins[y]) for x in range(len(ins)) for y in range(x + 1, len(ins))]
        node += [(outs[x], outs[y]) for x in range(len(outs)) for y in range(x + 1, len(outs))]
        node += [(e, f) for e in ins for f in outs]
        pairs.append(node)
    return pairs


def build_qcqp(inst, delta=DEFAULT_DELTA, pmax_terminal=True):
    """Penalty-relaxed bilinear QCQP of a pooling instance.

    Every equality of the binary-free problem becomes a band row; shortage
    rows ``-v - q + RQ <= 0`` stay as plain inequalities.
    """
    if not isinstance(inst, Instance):
        raise QcqpError("expected an Instance")
    vm = VarMap(inst)
    qb = QcqpBuilder(vm.n, delta)
    MT = inst.MT
    ns, ni = inst.n_source, inst.n_inter

    # bounds and objective
    for t in range(MT):
        for e in range(inst.n_arcs):
            j = vm.a(t, e)[1]
            qb.lb[j], qb.ub[j] = 0.0, inst.U[e]
            qb.c[j] = inst.CA[e]
        for k in range(inst.n_plant):
            j = vm.v(t, k)[1]
            qb.lb[j] = 0.0
            qb.c[j] = inst.CQ[k] * inst.RC[k, t]
    for t in range(1, MT + 1):
        for i in inst.storage_nodes:
            ref = vm.p(t, i)
            if ref[0] != "x":
                continue
            if i < ns:
                qb.lb[ref[1]] = 0.0
            elif t < MT or pmax_terminal:
                qb.lb[ref[1]], qb.ub[ref[1]] = inst.pmin[i], inst.pmax[i]
            else:
                qb.lb[ref[1]] = inst.pmin[i]
    qb.lb[vm.off_q: vm.off_v] = 0.0

    for t in range(MT):
        for i, pairs in enumerate(eliminate_binaries(inst, t)):
            for e, f in pairs:
                qb.add(1.0, vm.a(t, e), vm.a(t, f))
            qb.close_row(BAND, "one_pipeline")
        for i in range(ns):
            qb.add(-1.0, vm.p(t + 1, i))
            qb.add(1.0, vm.p(t, i))
            qb.add(float(inst.SA[i, t]), ("c", 1.0))
            for e in inst.out_arcs[i]:
                qb.add(-1.0, vm.a(t, e))
            qb.close_row(BAND, "source_balance")
            qb.add(-1.0, vm.p(t + 1, i), vm.q(t + 1, i))
            qb.add(1.0, vm.p(t, i), vm.q(t, i))
            qb.add(float(inst.SA[i, t] * inst.SQ[i, t]), ("c", 1.0))
            for e in inst.out_arcs[i]:
                qb.add(-1.0, vm.a(t, e), vm.q(t, i))
            qb.close_row(BAND, "source_quality")
        for i in range(ns, ns + ni):
            qb.add(-1.0, vm.p(t + 1, i))
            qb.add(1.0, vm.p(t, i))
            for e in inst.in_arcs[i]:
                qb.add(1.0, vm.a(t, e))
            for e in inst.out_arcs[i]:
                qb.add(-1.0, vm.a(t, e))
            qb.close_row(BAND, "tank_balance")
            qb.add(-1.0, vm.p(t + 1, i), vm.q(t + 1, i))
            qb.add(1.0, vm.p(t, i), vm.q(t, i))
            for e in inst.in_arcs[i]:
                qb.add(1.0, vm.a(t, e), vm.q(t, inst.tail[e]))
            for e in inst.out_arcs[i]:
                qb.add(-1.0, vm.a(t, e), vm.q(t, i))
            qb.close_row(BAND, "tank_quality")
        for i in inst.plants:
            k = inst.plant_index(i)
            qb.add(-1.0, vm.q(t, i))
            for e in inst.in_arcs[i]:
                qb.add(1.0 / inst.RC[k, t], vm.a(t, e), vm.q(t, inst.tail[e]))
            qb.close_row(BAND, "plant_quality")
    for t in range(MT):
        for i in inst.plants:
            k = inst.plant_index(i)
            qb.add(-1.0, vm.v(t, k))
            qb.add(-1.0, vm.q(t, i))
            qb.add(float(inst.RQ[k, t]), ("c", 1.0))
            qb.close_row(LE, "shortage")
    return qb.build(meta={"varmap": vm, "instance": inst})


def schedule_x(qp, s):
    """Core vector of ``s`` with a zero lambda block appended."""
    vm = qp.meta["varmap"]
    return np.r_[vm.to_x(s), np.zeros(qp.n_lambda)]


__all__ = [
    "BAND", "LE", "DEFAULT_DELTA", "Qcqp", "QcqpBuilder", "QcqpError", "VarMap",
    "build_qcqp", "eliminate_binaries", "eval_qcqp", "schedule_x",
]
