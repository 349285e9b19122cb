"""Feasible-schedule recovery from a relaxation point.

Stage one is a mixed-integer LP that picks one pipeline per node and step,
meets plant quantities exactly, and keeps stocks close to the relaxation
stocks (an L1 tracking term weighted by ``alpha``).  Plant qualities in that
LP use the relaxation's feeder qualities as fixed data, which keeps it
linear.  Stage two recomputes every quality by the exact mixing recursion.

The MILP is solved by a small branch-and-bound over the pipeline binaries
with HiGHS as the node LP solver.
"""

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .model import Schedule, mix_forward, stocks_from_flows

DEFAULT_ALPHA = 100.0
TOL_MIP = 1e-6
NODE_LIMIT = 100_000
INT_TOL = 1e-9

_HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9}


class FfsError(RuntimeError):
    """The recovery MILP has no feasible point."""

    def __init__(self, message, family=None):
        super().__init__(message)
        self.family = family


class Ffs1Model:
    """Matrices of the recovery MILP for one instance and reference point.

    Variable blocks (all 0-based steps ``t = 0..MT-1``): flows ``a[t, e]``,
    binaries ``u[t, e]``, stocks ``p[t+1, i]`` for sources and tanks, plant
    qualities ``q[t, k]``, shortages ``v[t, k]``, and one tracking slack per
    stock variable.
    """

    def __init__(self, inst, p_ref, q_ref, alpha=DEFAULT_ALPHA):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.inst = inst
        self.alpha = float(alpha)
        MT, nA = inst.MT, inst.n_arcs
        nsi = inst.n_source + inst.n_inter
        npl = inst.n_plant
        self.nA, self.nsi, self.npl = nA, nsi, npl
        self.off_a = 0
        self.off_u = MT * nA
        self.off_p = 2 * MT * nA
        self.off_q = self.off_p + MT * nsi
        self.off_v = self.off_q + MT * npl
        self.off_s = self.off_v + MT * npl
        self.n = self.off_s + MT * nsi
        p_ref = np.asarray(p_ref, dtype=float)
        q_ref = np.asarray(q_ref, dtype=float)

        c = np.zeros(self.n)
        lb = np.zeros(self.n)
        ub = np.full(self.n, np.inf)
        eq_r, eq_c, eq_v, beq = [], [], [], []
        in_r, in_c, in_v, bin_ = [], [], [], []
        fam_eq, fam_in = [], []

        def eq_row(cols, vals, rhs, fam):
            r = len(beq)
            eq_r.extend([r] * len(cols))
            eq_c.extend(cols)
            eq_v.extend(vals)
            beq.append(rhs)
            fam_eq.append(fam)

        def in_row(cols, vals, rhs, fam):
            r = len(bin_)
            in_r.extend([r] * len(cols))
            in_c.extend(cols)
            in_v.extend(vals)
            bin_.append(rhs)
            fam_in.append(fam)

        self.big_m = self.flow_caps()
        for t in range(MT):
            for e in range(nA):
                ja, ju = self.ia(t, e), self.iu(t, e)
                c[ja] = inst.CA[e]
                ub[ja] = inst.U[e]
                ub[ju] = 1.0
                in_row([ja, ju], [1.0, -self.big_m[t, e]], 0.0, "flow_bounds")
                if inst.L[e] > 0:
                    in_row([ju, ja], [inst.L[e], -1.0], 0.0, "flow_bounds")
            for i in range(inst.V):
                arcs = inst.in_arcs[i] + inst.out_arcs[i]
                if len(arcs) > 1:
                    in_row([self.iu(t, e) for e in arcs], [1.0] * len(arcs), 1.0, "one_pipeline")
            for i in range(nsi):
                # p[t+1] - p[t] + out - in = supply
                cols, vals = [self.ip(t + 1, i)], [1.0]
                rhs = float(inst.SA[i, t]) if i < inst.n_source else 0.0
                if t > 0:
                    cols.append(self.ip(t, i))
                    vals.append(-1.0)
                else:
                    rhs += float(inst.p1[i])
                for e in inst.out_arcs[i]:
                    cols.append(self.ia(t, e))
                    vals.append(1.0)
                for e in inst.in_arcs[i]:
                    cols.append(self.ia(t, e))
                    vals.append(-1.0)
                eq_row(cols, vals, rhs, "source_balance" if i < inst.n_source else "tank_balance")
                jp, js = self.ip(t + 1, i), self.is_(t + 1, i)
                if i >= inst.n_source:
                    lb[jp], ub[jp] = inst.pmin[i], inst.pmax[i]
                c[js] = self.alpha
                in_row([jp, js], [1.0, -1.0], float(p_ref[t + 1, i]), "tracking")
                in_row([jp, js], [-1.0, -1.0], -float(p_ref[t + 1, i]), "tracking")
            for i in inst.plants:
                k = inst.plant_index(i)
                feeders = inst.in_arcs[i]
                eq_row([self.ia(t, e) for e in feeders], [1.0] * len(feeders), float(inst.RC[k, t]), "plant_demand")
                cols = [self.iq(t, k)] + [self.ia(t, e) for e in feeders]
                vals = [float(inst.RC[k, t])] + [-float(q_ref[t, inst.tail[e]]) for e in feeders]
                eq_row(cols, vals, 0.0, "plant_quality")
                in_row([self.iq(t, k), self.iv(t, k)], [-1.0, -1.0], -float(inst.RQ[k, t]), "shortage")
                c[self.iv(t, k)] = 1.0
        self.c = c
        self.lb = lb
        self.ub = ub
        self.A_eq = sp.csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(beq), self.n))
        self.b_eq = np.array(beq, dtype=float)
        self.A_ub = sp.csr_matrix((in_v, (in_r, in_c)), shape=(len(bin_), self.n))
        self.b_ub = np.array(bin_, dtype=float)
        self.family_eq = fam_eq
        self.family_ub = fam_in
        self.int_idx = np.arange(self.off_u, self.off_p)
        # arcs that share an endpoint with arc e at the same step
        conflicts = []
        for e in range(nA):
            ends = (inst.tail[e], inst.head[e])
            others = set()
            for node in ends:
                others.update(inst.in_arcs[node])
                others.update(inst.out_arcs[node])
            others.discard(e)
            conflicts.append(sorted(others))
        self.conflicts = conflicts

    def flow_caps(self):
        """Largest flow each arc can carry at each step in any feasible point.

        A plant takes exactly its requirement, a tank moves at most its
        storage range, and a source ships at most what it has received so
        far.  Using these in place of ``U`` in ``a <= M u`` leaves the integer
        feasible set unchanged and tightens the node LPs.
        """
        inst = self.inst
        MT = inst.MT
        caps = np.tile(np.asarray(inst.U, dtype=float), (MT, 1))
        ns = inst.n_source
        avail = np.cumsum(inst.SA, axis=1) + inst.p1[:ns, None]
        for e in range(inst.n_arcs):
            j, k = int(inst.tail[e]), int(inst.head[e])
            for t in range(MT):
                cap = caps[t, e]
                if j < ns:
                    cap = min(cap, avail[j, t])
                else:
                    cap = min(cap, inst.pmax[j] - inst.pmin[j])
                if inst.kind(k) == "plant":
                    cap = min(cap, inst.RC[inst.plant_index(k), t])
                else:
                    cap = min(cap, inst.pmax[k] - inst.pmin[k])
                caps[t, e] = max(cap, inst.L[e])
        return caps

    # --- index helpers ---------------------------------------------------
    def ia(self, t, e):
        return self.off_a + t * self.nA + e

    def iu(self, t, e):
        return self.off_u + t * self.nA + e

    def ip(self, t, i):
        """Stock of storage node ``i`` at state ``t`` (``t >= 1``)."""
        return self.off_p + (t - 1) * self.nsi + i

    def is_(self, t, i):
        return self.off_s + (t - 1) * self.nsi + i

    def iq(self, t, k):
        return self.off_q + t * self.npl + k

    def iv(self, t, k):
        return self.off_v + t * self.npl + k

    # --- LP solves -------------------------------------------------------
    def solve_lp(self, lb, ub, A_ub=None, b_ub=None, A_eq=None, b_eq=None):
        res = linprog(
            self.c, A_ub=self.A_ub if A_ub is None else A_ub, b_ub=self.b_ub if b_ub is None else b_ub,
            A_eq=self.A_eq if A_eq is None else A_eq, b_eq=self.b_eq if b_eq is None else b_eq,
            bounds=np.c_[lb, ub], method="highs-ds", options=_HIGHS_OPTIONS,
        )
        if res.status == 0:
            self.last_reduced = (np.asarray(res.lower.marginals), np.asarray(res.upper.marginals))
            return float(res.fun), np.asarray(res.x)
        self.last_reduced = None
        if res.status == 2:
            return None, None
        raise FfsError(f"node LP failed: {res.message}")

    def propagate(self, lb, ub):
        """Tighten binary bounds until nothing changes.

        An open pipeline closes every pipeline sharing one of its endpoints;
        a plant whose feeders are all closed but one must use that one.
        Closed pipelines carry no flow.  Returns ``(None, None)`` on conflict.
        """
        inst = self.inst
        MT, nA = inst.MT, self.nA
        lb = lb.copy()
        ub = ub.copy()
        for t in range(MT):
            base = self.off_u + t * nA
            changed = True
            while changed:
                changed = False
                for e in np.flatnonzero(lb[base: base + nA] > 0.5):
                    for f in self.conflicts[e]:
                        if lb[base + f] > 0.5:
                            return None, None
                        if ub[base + f] > 0.5:
                            ub[base + f] = 0.0
                for i in inst.plants:
                    if inst.RC[inst.plant_index(i), t] <= 0:
                        continue
                    feeders = [e for e in inst.in_arcs[i] if ub[base + e] > 0.5]
                    if not feeders:
                        return None, None
                    if len(feeders) == 1 and lb[base + feeders[0]] < 0.5:
                        lb[base + feeders[0]] = 1.0
                        changed = True
            closed = np.flatnonzero(ub[base: base + nA] < 0.5)
            ub[self.off_a + t * nA + closed] = 0.0
        return lb, ub

    def reduced_cost_fix(self, obj, x, lb, ub, cutoff):
        """Fix binaries whose reduced cost alone pushes the bound past ``cutoff``."""
        if self.last_reduced is None or not np.isfinite(cutoff):
            return lb, ub
        lo, hi = self.last_reduced
        idx = self.int_idx
        free = (lb[idx] < 0.5) & (ub[idx] > 0.5)
        at_zero = free & (x[idx] <= INT_TOL) & (obj + lo[idx] >= cutoff)
        at_one = free & (x[idx] >= 1.0 - INT_TOL) & (obj - hi[idx] >= cutoff)
        if not (at_zero.any() or at_one.any()):
            return lb, ub
        lb, ub = lb.copy(), ub.copy()
        ub[idx[at_zero]] = 0.0
        lb[idx[at_one]] = 1.0
        return self.propagate(lb, ub)

    def first_infeasible_family(self):
        """Name of the first constraint family whose removal restores LP feasibility."""
        order = ["plant_demand", "one_pipeline", "flow_bounds", "tank_balance", "source_balance"]
        for fam in order:
            keep_eq = np.array([f != fam for f in self.family_eq])
            keep_ub = np.array([f != fam for f in self.family_ub])
            lb, ub = self.lb.copy(), self.ub.copy()
            if fam in ("tank_balance", "source_balance"):
                lb[self.off_p:self.off_q] = -np.inf
                ub[self.off_p:self.off_q] = np.inf
            obj, _ = self.solve_lp(lb, ub, self.A_ub[keep_ub], self.b_ub[keep_ub],
                                   self.A_eq[keep_eq], self.b_eq[keep_eq])
            if obj is not None:
                return fam
        return "storage"


@dataclass
class BnbResult:
    """Outcome of the branch-and-bound search."""

    objective: float
    x: np.ndarray
    bound: float
    root_bound: float
    nodes: int
    status: str
    gap: float
    incumbent_history: list = field(default_factory=list)
    bound_history: list = field(default_factory=list)
    seconds: float = 0.0


class _OpenNodes:
    """Open-node pool: LIFO until an incumbent exists, best bound afterwards."""

    def __init__(self):
        self.heap = []
        self.stack = []
        self.alive = {}

    def push(self, bound, nid, lb, ub):
        self.alive[nid] = (bound, lb, ub)
        heapq.heappush(self.heap, (bound, nid))
        self.stack.append(nid)

    def pop(self, best_first):
        src = self.heap if best_first else self.stack
        while src:
            nid = heapq.heappop(src)[1] if best_first else src.pop()
            if nid in self.alive:
                bound, lb, ub = self.alive.pop(nid)
                return bound, nid, lb, ub
        return None

    def min_bound(self):
        while self.heap and self.heap[0][1] not in self.alive:
            heapq.heappop(self.heap)
        return self.heap[0][0] if self.heap else np.inf

    def __len__(self):
        return len(self.alive)


def branch_and_bound(model, tol_mip=TOL_MIP, node_limit=NODE_LIMIT, time_limit=None):
    """Depth-first dives on the up branch; best-bound backtracking once an incumbent exists."""
    t0 = time.perf_counter()
    lb0, ub0 = model.propagate(model.lb, model.ub)
    root_obj, root_x = model.solve_lp(lb0, ub0)
    if root_obj is None:
        fam = model.first_infeasible_family()
        raise FfsError(f"recovery MILP is infeasible (first infeasible family: {fam})", fam)
    ids = itertools.count()
    pool = _OpenNodes()
    best_obj, best_x = np.inf, None
    inc_hist, bnd_hist = [], []
    nodes = 1
    status = "optimal"
    current = (root_obj, next(ids), lb0, ub0, root_x)

    while current is not None or len(pool):
        if current is None:
            item = pool.pop(best_first=best_x is not None)
            if item is None:
                break
            bound, nid, lb, ub = item
            if bound >= best_obj - tol_mip:
                continue
            obj, x = model.solve_lp(lb, ub)
            nodes += 1
            if obj is None:
                continue
            current = (obj, nid, lb, ub, x)
        obj, nid, lb, ub, x = current
        current = None
        if obj >= best_obj - tol_mip:
            continue
        bnd_hist.append(min(obj, pool.min_bound(), best_obj))
        lb, ub = model.reduced_cost_fix(obj, x, lb, ub, best_obj - tol_mip)
        if lb is None:
            continue
        uvals = x[model.int_idx]
        frac = np.abs(uvals - np.round(uvals))
        if frac.max() <= INT_TOL:
            fix_lb, fix_ub = lb.copy(), ub.copy()
            rounded = np.round(uvals)
            fix_lb[model.int_idx] = rounded
            fix_ub[model.int_idx] = rounded
            fix_lb, fix_ub = model.propagate(fix_lb, fix_ub)
            if fix_lb is not None:
                o2, x2 = model.solve_lp(fix_lb, fix_ub)
                if o2 is not None and o2 < best_obj:
                    best_obj, best_x = o2, x2
                    inc_hist.append(best_obj)
            continue
        if nodes >= node_limit or (time_limit is not None and time.perf_counter() - t0 > time_limit):
            pool.push(obj, nid, lb, ub)
            status = "node_limit" if nodes >= node_limit else "time_limit"
            break
        # most fractional; ties by (step, arc) through the index order
        k = int(np.argmin(np.abs(uvals - 0.5)))
        j = model.int_idx[k]
        up_lb, up_ub = lb.copy(), ub.copy()
        up_lb[j] = 1.0
        up_lb, up_ub = model.propagate(up_lb, up_ub)
        dn_lb, dn_ub = lb.copy(), ub.copy()
        dn_ub[j] = 0.0
        dn_lb, dn_ub = model.propagate(dn_lb, dn_ub)
        if dn_lb is not None:
            pool.push(obj, next(ids), dn_lb, dn_ub)
        if up_lb is not None:
            o_up, x_up = model.solve_lp(up_lb, up_ub)
            nodes += 1
            if o_up is not None:
                current = (o_up, next(ids), up_lb, up_ub, x_up)
    bound = min(best_obj, pool.min_bound())
    if best_x is None:
        if status == "optimal":
            fam = model.first_infeasible_family()
            raise FfsError(f"recovery MILP is infeasible (first infeasible family: {fam})", fam)
        raise FfsError(f"no integer point found before the {status.replace('_', ' ')}")
    gap = max(best_obj - bound, 0.0)
    return BnbResult(best_obj, best_x, bound, root_obj, nodes, status, gap, inc_hist, bnd_hist,
                     time.perf_counter() - t0)


@dataclass
class FfsResult:
    """Recovered schedule plus the stage-one details."""

    schedule: Schedule
    stage_one: Schedule
    bnb: BnbResult
    diagnostics: list
    seconds: float


def ffs1(inst, p_ref, q_ref, alpha=DEFAULT_ALPHA, tol_mip=TOL_MIP, node_limit=NODE_LIMIT, time_limit=None):
    """Solve the recovery MILP; returns ``(schedule, bnb_result)``.

    ``p_ref``/``q_ref`` are ``(MT+1, V)`` arrays (relaxation stocks and
    qualities).  The returned schedule has stocks recomputed from the flows
    by the balance equations, so they are consistent to rounding.
    """
    model = Ffs1Model(inst, p_ref, q_ref, alpha)
    res = branch_and_bound(model, tol_mip=tol_mip, node_limit=node_limit, time_limit=time_limit)
    x = res.x
    MT, nA = inst.MT, inst.n_arcs
    s = Schedule.zeros(inst)
    u = np.round(x[model.off_u:model.off_p]).reshape(MT, nA).astype(np.int8)
    a = np.clip(x[:model.off_u].reshape(MT, nA), 0.0, None) * u
    s.a[:] = np.minimum(a, inst.U[None, :])
    s.u[:] = u
    s.p[:] = stocks_from_flows(inst, s.a)
    s.q[0, :model.nsi] = inst.q1[:model.nsi]
    for t in range(MT):
        for k, i in enumerate(inst.plants):
            s.q[t, i] = x[model.iq(t, k)]
            s.v[t, k] = x[model.iv(t, k)]
    s.meta["ffs1_objective"] = res.objective
    return s, res


def ffs2(inst, a, u, p, q=None, v=None, diagnostics=None):
    """Exact quality recursion on fixed flows and stocks; returns ``(q, v)``."""
    del u, q, v  # only flows and stocks drive the recursion
    return mix_forward(inst, np.asarray(a, dtype=float), np.asarray(p, dtype=float), diagnostics=diagnostics)


def ffs(inst, p_ref, q_ref, alpha=DEFAULT_ALPHA, **kw):
    """Both stages: MILP recovery followed by the quality recursion."""
    t0 = time.perf_counter()
    s1, res = ffs1(inst, p_ref, q_ref, alpha, **kw)
    diag = []
    q, v = ffs2(inst, s1.a, s1.u, s1.p, s1.q, s1.v, diagnostics=diag)
    out = Schedule(s1.a.copy(), s1.p.copy(), q, s1.u.copy(), v, {"ffs1_objective": res.objective})
    return FfsResult(out, s1, res, diag, time.perf_counter() - t0)


def enumerate_ffs1(inst, p_ref, q_ref, alpha=DEFAULT_ALPHA, lp_solver=None):
    """Exhaustive optimum of the recovery MILP over all one-pipeline patterns.

    ``lp_solver(model, lb, ub)`` returns the LP optimum or None when
    infeasible; it defaults to HiGHS.  Meant for tiny instances only.
    """
    model = Ffs1Model(inst, p_ref, q_ref, alpha)
    solver = lp_solver or (lambda m, lb, ub: m.solve_lp(lb, ub)[0])
    MT, nA = inst.MT, inst.n_arcs
    per_step = []
    for _ in range(MT):
        pats = []
        for bits in itertools.product((0, 1), repeat=nA):
            used = np.flatnonzero(bits)
            if all(f not in used for e in used for f in model.conflicts[e]):
                pats.append(np.array(bits, dtype=float))
        per_step.append(pats)
    best = np.inf
    count = 0
    for combo in itertools.product(*per_step):
        u = np.concatenate(combo)
        lb, ub = model.lb.copy(), model.ub.copy()
        lb[model.int_idx] = u
        ub[model.int_idx] = u
        ub[model.off_a:model.off_u] = np.where(u > 0.5, ub[model.off_a:model.off_u], 0.0)
        val = solver(model, lb, ub)
        count += 1
        if val is not None and val < best:
            best = val
    return best, count
