"""Rescheduling loop: re-solve on the remaining horizon and repair the first shortage window.

Time indices here are 0-based.  ``t_hat`` counts accepted steps, so the
state row ``t_hat`` of the accumulated schedule is the starting state of
the next window.  A window covers steps ``t_hat..t_plus`` where ``t_plus``
is the first step whose recovered schedule shows a shortage.

Each repaired step is rolled forward with the exact balance and mixing
equations, so the output stays consistent whatever the repair chooses.
"""

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .ffs import DEFAULT_ALPHA, FfsError, ffs
from .model import Schedule, mix_forward, objective, residuals, stocks_from_flows, sucs_ratio
from .qcqp import DEFAULT_DELTA, build_qcqp
from .relax import LP, solve_relaxation
from .report import COMPLETE, UNREPAIRABLE, SolveReport

CASE_I = "I"
CASE_II = "II"

# window outcomes
REPAIRED = "repaired"
ABORTED = "aborted"
NO_MATCH = "unrepairable"

# shortages below this fraction of RQ are rounding noise of the pinned flows
SHORTAGE_EPS = 1e-12


class RescheduleError(RuntimeError):
    """A relaxation or recovery step failed where no fallback applies."""


@dataclass
class RescheduleConfig:
    delta: float = DEFAULT_DELTA
    alpha: float = DEFAULT_ALPHA
    backend: str = "reference"
    solver_config: object = None
    ffs_time_limit: float = 30.0
    ffs_node_limit: int = 20_000


@dataclass
class IterationRecord:
    t_hat: int
    t_plus: int
    cases: list
    relax_obj: float
    outcome: str
    note: str = ""


@dataclass
class RescheduleState:
    """Accumulated schedule, restart step, and per-iteration history."""

    x_star: Schedule
    t_hat: int = 0
    history: list = field(default_factory=list)

    def accept(self, window, t_end):
        """Copy window steps ``0..t_end-t_hat-1`` into ``x_star`` and advance ``t_hat``."""
        t0 = self.t_hat
        k = t_end - t0
        if k <= 0:
            raise RescheduleError("restart step must strictly increase")
        x = self.x_star
        x.a[t0:t_end] = window.a[:k]
        x.u[t0:t_end] = window.u[:k]
        x.v[t0:t_end] = window.v[:k]
        x.p[t0 + 1:t_end + 1] = window.p[1:k + 1]
        # plant qualities live on step rows; storage qualities on state rows
        x.q[t0:t_end] = np.where(self._plant_mask, window.q[:k], x.q[t0:t_end])
        x.q[t0 + 1:t_end + 1] = np.where(self._plant_mask, x.q[t0 + 1:t_end + 1], window.q[1:k + 1])
        self.t_hat = t_end

    def init_mask(self, inst):
        self._plant_mask = np.zeros(inst.V, dtype=bool)
        self._plant_mask[inst.n_source + inst.n_inter:] = True


@dataclass
class RepairTables:
    """Sorted supply/requirement tables and matched arcs of one shortage step."""

    D: dict
    S: dict
    S_bar: dict
    plant_order: list
    tank_order: list
    source_order: list
    A_IP: list
    A_SI: list
    J: list
    M_bar: int


@dataclass
class RepairResult:
    schedule: Schedule
    status: str
    cases: list
    tables: list
    reason: str = ""


class _Abort(Exception):
    pass


def shortage_steps(v, RQ):
    """Steps with a plant shortage above rounding noise (``v`` is (steps, plants))."""
    tol = SHORTAGE_EPS * np.maximum(RQ.T[: v.shape[0]], 1.0)
    return np.flatnonzero((v > tol).any(axis=1))


def case_select(inst, xplus, t):
    """Case I when every plant quality meets its requirement at step ``t``."""
    P = slice(inst.n_source + inst.n_inter, inst.V)
    return CASE_I if np.all(xplus.q[t, P] >= inst.RQ[:, t]) else CASE_II


def _advance(inst, t, a, p, q):
    """Exact balance and mixing for one step; returns next stocks/qualities and plant q, v."""
    nsi = inst.n_source + inst.n_inter
    outf = np.zeros(inst.V)
    inf = np.zeros(inst.V)
    mass = np.zeros(inst.V)
    np.add.at(outf, inst.tail, a)
    np.add.at(inf, inst.head, a)
    np.add.at(mass, inst.head, a * q[inst.tail])
    p_next = np.zeros(inst.V)
    q_next = np.zeros(inst.V)
    supply = np.zeros(inst.V)
    supply_mass = np.zeros(inst.V)
    supply[: inst.n_source] = inst.SA[:, t]
    supply_mass[: inst.n_source] = inst.SA[:, t] * inst.SQ[:, t]
    p_next[:nsi] = p[:nsi] + supply[:nsi] + inf[:nsi] - outf[:nsi]
    num = p[:nsi] * q[:nsi] + supply_mass[:nsi] + mass[:nsi] - outf[:nsi] * q[:nsi]
    pos = p_next[:nsi] > 0
    q_next[:nsi][pos] = num[pos] / p_next[:nsi][pos]
    qp = mass[nsi:] / inst.RC[:, t]
    gap = inst.RQ[:, t] - qp
    v = np.where(gap > SHORTAGE_EPS * np.maximum(inst.RQ[:, t], 1.0), gap, 0.0)
    return p_next, q_next, qp, v


def _respect_lower_bounds(inst, a, u):
    """Drop flows that fell below a positive lower bound after clamping."""
    low = (a < inst.L - 1e-12) & (u > 0)
    a[low] = 0.0
    u[low] = 0
    u[a > 0] = 1


def _case1_flows(inst, xplus, t, p, q):
    """Flows of one excess-supply step; raises ``_Abort`` on an empty feeder."""
    ns, nsi = inst.n_source, inst.n_source + inst.n_inter
    u = xplus.u[t].astype(np.int8).copy()
    a = np.zeros(inst.n_arcs)
    avail = p - inst.pmin
    avail[:ns] = p[:ns]
    room = inst.pmax - p
    q_tilde = xplus.q[t]
    for i in inst.plants:
        k = inst.plant_index(i)
        for e in inst.in_arcs[i]:
            if not u[e]:
                continue
            j = inst.tail[e]
            if q[j] <= 0:
                raise _Abort(f"empty feeder {j} at step {t}")
            want = xplus.a[t, e] - inst.RC[k, t] * (q_tilde[i] - inst.RQ[k, t]) / q[j]
            a[e] = min(max(want, 0.0), inst.U[e], max(avail[j], 0.0))
            avail[j] -= a[e]
    for e in range(inst.n_arcs):
        j, k = inst.tail[e], inst.head[e]
        if u[e] and ns <= j < nsi and ns <= k < nsi:
            a[e] = min(max(xplus.a[t, e], 0.0), inst.U[e], max(avail[j], 0.0), max(room[k], 0.0))
            avail[j] -= a[e]
            room[k] -= a[e]
    for e in range(inst.n_arcs):
        k, j = inst.tail[e], inst.head[e]
        if u[e] and k < ns:
            a[e] = max(min(inst.U[e], avail[k], room[j]), 0.0)
            avail[k] -= a[e]
            room[j] -= a[e]
    _respect_lower_bounds(inst, a, u)
    return a, u


def _pair_supply(inst, e, p, q):
    j = inst.tail[e]
    return min(p[j] - inst.pmin[j], inst.U[e]) * q[j]


def match_plants(inst, plant_order, tank_order, ok):
    """Greedy monotone matching: each plant, by descending requirement, takes the
    first feasible tank after the previous plant's tank in ``tank_order``.

    ``ok(j, i)`` says whether tank ``j`` can serve plant ``i``.  Returns a
    list of ``(j, i)`` or ``None`` when no monotone matching exists.
    """
    pos = -1
    out = []
    for i in plant_order:
        for r in range(pos + 1, len(tank_order)):
            if ok(tank_order[r], i):
                out.append((tank_order[r], i))
                pos = r
                break
        else:
            return None
    return out


def match_plants_exhaustive(plant_order, tank_order, ok):
    """Lexicographically first monotone matching by full enumeration (test oracle)."""
    for combo in itertools.combinations(range(len(tank_order)), len(plant_order)):
        if all(ok(tank_order[r], i) for r, i in zip(combo, plant_order)):
            return [(tank_order[r], i) for r, i in zip(combo, plant_order)]
    return None


def repair_tables(inst, t, p, q):
    """Requirement and supply tables of a shortage step, with the plant matching."""
    ns, nsi = inst.n_source, inst.n_source + inst.n_inter
    D = {i: float(inst.RC[inst.plant_index(i), t] * inst.RQ[inst.plant_index(i), t]) for i in inst.plants}
    S = {}
    for j in inst.inters:
        caps = [inst.U[e] for e in inst.out_arcs[j] if inst.head[e] >= nsi]
        S[j] = min(p[j] - inst.pmin[j], max(caps, default=0.0)) * q[j]
    plant_order = sorted(inst.plants, key=lambda i: (-D[i], i))
    tank_order = sorted(inst.inters, key=lambda j: (-S[j], j))

    def ok(j, i):
        e = inst.arc_index(j, i)
        return e is not None and _pair_supply(inst, e, p, q) >= D[i]

    A_IP = match_plants(inst, plant_order, tank_order, ok)
    matched = {j for j, _ in A_IP or ()}
    J = sorted((j for j in inst.inters if j not in matched), key=lambda j: (S[j], j))
    S_bar = {}
    for k in inst.sources:
        caps = [inst.U[e] for e in inst.out_arcs[k] if inst.head[e] in J]
        S_bar[k] = min(p[k], max(caps, default=0.0)) * q[k]
    source_order = sorted(inst.sources, key=lambda k: (-S_bar[k], k))
    M_bar = max(0, min(inst.n_source, inst.n_inter - inst.n_plant, len(J)))
    A_SI = []
    for k, j in zip(source_order[:M_bar], J[:M_bar]):
        if inst.arc_index(k, j) is not None:
            A_SI.append((k, j))
    del ns
    return RepairTables(D, S, S_bar, plant_order, tank_order, source_order, A_IP, A_SI, J, M_bar)


def _case2_flows(inst, t, p, q):
    """Flows of one shortage step; returns ``(a, u, tables)`` with ``a=None`` on a failed matching."""
    tab = repair_tables(inst, t, p, q)
    if tab.A_IP is None:
        return None, None, tab
    a = np.zeros(inst.n_arcs)
    u = np.zeros(inst.n_arcs, dtype=np.int8)
    for j, i in tab.A_IP:
        e = inst.arc_index(j, i)
        u[e] = 1
        if tab.D[i] > 0:
            a[e] = min(tab.D[i] / q[j], inst.U[e], p[j] - inst.pmin[j])
    for k, j in tab.A_SI:
        e = inst.arc_index(k, j)
        u[e] = 1
        a[e] = max(min(p[k], inst.U[e], inst.pmax[j] - p[j]), 0.0)
    _respect_lower_bounds(inst, a, u)
    return a, u, tab


def repair_window(inst, xplus, t_start, t_end, force=None):
    """Repair steps ``t_start..t_end-1`` of ``xplus`` (a schedule on ``inst``).

    The case is chosen per step from ``xplus`` unless ``force`` names one;
    a forced Case I falls back to per-step selection where it does not hold.
    Steps after the window keep their ``xplus`` values.  On a failed
    matching or an empty feeder the input is returned unchanged.
    """
    out = xplus.copy()
    p = xplus.p[t_start].copy()
    q = xplus.q[t_start].copy()
    cases, tables = [], []
    nsi = inst.n_source + inst.n_inter
    for t in range(t_start, t_end):
        case = case_select(inst, xplus, t)
        if force == CASE_II:
            case = CASE_II
        try:
            if case == CASE_I:
                a, u = _case1_flows(inst, xplus, t, p, q)
                if _advance(inst, t, a, p, q)[3].any():
                    # a feeder lost quality since the recovery; try the shortage repair here
                    a2, u2, tab = _case2_flows(inst, t, p, q)
                    if a2 is not None:
                        a, u, case = a2, u2, CASE_I + "->" + CASE_II
                        tables.append(tab)
            else:
                a, u, tab = _case2_flows(inst, t, p, q)
                tables.append(tab)
                if a is None:
                    return RepairResult(xplus.copy(), NO_MATCH, cases + [case], tables,
                                        f"no tank can serve the plants at step {t}")
        except _Abort as exc:
            return RepairResult(xplus.copy(), ABORTED, cases + [case], tables, str(exc))
        cases.append(case)
        p_next, q_next, qp, v = _advance(inst, t, a, p, q)
        out.a[t] = a
        out.u[t] = u
        out.q[t, nsi:] = qp
        out.v[t] = v
        out.p[t + 1, :nsi] = p_next[:nsi]
        out.q[t + 1, :nsi] = q_next[:nsi]
        p, q = p_next, q_next
    return RepairResult(out, REPAIRED, cases, tables)


def repair_case1(inst, xplus, window):
    """Excess-supply repair over ``window`` (a range of steps)."""
    return repair_window(inst, xplus, window.start, window.stop, force=CASE_I)


def repair_case2(inst, xplus, window):
    """Shortage repair over ``window``; status ``unrepairable`` returns ``xplus`` unchanged."""
    return repair_window(inst, xplus, window.start, window.stop, force=CASE_II)


def clamped_rollout(inst, a, p_start, q_start):
    """Schedule from the given flows, scaled down where stocks or headroom run out."""
    MT, nsi, ns = inst.MT, inst.n_source + inst.n_inter, inst.n_source
    a = np.clip(np.asarray(a, dtype=float), 0.0, inst.U[None, :]).copy()
    p = np.asarray(p_start, dtype=float).copy()
    for t in range(MT):
        outf = np.zeros(inst.V)
        np.add.at(outf, inst.tail, a[t])
        avail = p - inst.pmin
        avail[:ns] = p[:ns]
        scale = np.ones(inst.V)
        over = outf > np.maximum(avail, 0.0) + 1e-12
        scale[over] = np.maximum(avail[over], 0.0) / outf[over]
        a[t] *= scale[inst.tail]
        outf = np.zeros(inst.V)
        inf = np.zeros(inst.V)
        np.add.at(outf, inst.tail, a[t])
        np.add.at(inf, inst.head, a[t])
        room = inst.pmax - p + outf
        hs = np.ones(inst.V)
        full = np.zeros(inst.V, dtype=bool)
        full[ns:nsi] = inf[ns:nsi] > np.maximum(room[ns:nsi], 0.0) + 1e-12
        hs[full] = np.maximum(room[full], 0.0) / inf[full]
        a[t] *= hs[inst.head]
        net = np.zeros(inst.V)
        np.add.at(net, inst.head, a[t])
        np.subtract.at(net, inst.tail, a[t])
        p[:nsi] = p[:nsi] + net[:nsi]
        p[:ns] += inst.SA[:, t]
    u = (a > 0).astype(np.int8)
    _respect_lower_bounds_all(inst, a, u)
    pp = stocks_from_flows(inst, a, p_start)
    qq, v = mix_forward(inst, a, pp, q_start)
    return Schedule(a, pp, qq, u, v)


def _respect_lower_bounds_all(inst, a, u):
    for t in range(a.shape[0]):
        _respect_lower_bounds(inst, a[t], u[t])


def _sucs(inst, s):
    # nothing required means nothing can be short
    return 1.0 if float(inst.RQ.sum()) == 0.0 else sucs_ratio(inst, s)


def _window_plus(sub, cfg, relax_kind):
    """Relaxation then recovery on a window instance; returns ``(x_plus, relax_obj, times)``."""
    t0 = time.perf_counter()
    qp = build_qcqp(sub, delta=cfg.delta)
    rr = solve_relaxation(qp, relax_kind, backend=cfg.backend, config=cfg.solver_config)
    if not rr.usable:
        raise RescheduleError(f"relaxation on {sub.name} ended with status {rr.status}")
    t1 = time.perf_counter()
    ref = qp.meta["varmap"].from_x(rr.x[: qp.n])
    fr = ffs(sub, ref.p, ref.q, cfg.alpha, time_limit=cfg.ffs_time_limit, node_limit=cfg.ffs_node_limit)
    return fr.schedule, rr.objective, {"relax": t1 - t0, "ffs": time.perf_counter() - t1}


def reschedule(inst, relax_kind=LP, cfg=None, initial=None):
    """Refine a recovered schedule until no shortage remains or a repair fails.

    ``initial`` is an optional ``(x_plus, relax_obj)`` for the full horizon,
    saving the first relaxation and recovery.  Returns ``(x_star, report)``.
    """
    cfg = cfg or RescheduleConfig()
    t_start = time.perf_counter()
    MT = inst.MT
    state = RescheduleState(Schedule.zeros(inst))
    state.init_mask(inst)
    state.x_star.p[0] = inst.p1
    state.x_star.q[0, : inst.n_source + inst.n_inter] = inst.q1[: inst.n_source + inst.n_inter]
    times = {"relax": 0.0, "ffs": 0.0, "repair": 0.0}
    relax_objs = []
    termination = COMPLETE
    prev_plus = None  # last recovered schedule in global step indexing
    while state.t_hat < MT:
        t0 = state.t_hat
        x = state.x_star
        sub = inst.window(t0, x.p[t0], x.q[t0])
        note = ""
        if t0 == 0 and initial is not None:
            xplus, robj = initial[0].copy(), initial[1]
        else:
            try:
                xplus, robj, tm = _window_plus(sub, cfg, relax_kind)
                times["relax"] += tm["relax"]
                times["ffs"] += tm["ffs"]
            except FfsError as exc:
                if prev_plus is None:
                    raise
                xplus = clamped_rollout(sub, prev_plus.a[t0:], x.p[t0], x.q[t0])
                robj, note = None, f"ffs_infeasible: {exc}"
        if robj is not None:
            relax_objs.append(robj)
        prev_plus = Schedule.zeros(inst)
        prev_plus.a[t0:] = xplus.a
        steps = shortage_steps(xplus.v, sub.RQ)
        if steps.size == 0:
            state.accept(xplus, MT)
            state.history.append(IterationRecord(t0, None, [], robj, COMPLETE, note))
            break
        tp = int(steps[0])
        tr = time.perf_counter()
        res = repair_window(sub, xplus, 0, tp + 1)
        times["repair"] += time.perf_counter() - tr
        state.history.append(IterationRecord(t0, t0 + tp, res.cases, robj, res.status,
                                             "; ".join(s for s in (note, res.reason) if s)))
        if res.status == NO_MATCH:
            state.accept(xplus, MT)
            termination = UNREPAIRABLE
            break
        state.accept(res.schedule, t0 + tp + 1)
    x_star = state.x_star
    times["reschedule"] = times["relax"] + times["ffs"] + times["repair"]
    times["total"] = time.perf_counter() - t_start
    rep = residuals(inst, x_star)
    report = SolveReport(
        instance=inst.name, relax_kind=relax_kind, mode="reschedule",
        relax_obj_start=relax_objs[0] if relax_objs else None,
        relax_obj_final=relax_objs[-1] if len(relax_objs) > 1 else None,
        recovered_obj=objective(inst, x_star), sucs_ratio=_sucs(inst, x_star), times=times,
        termination=termination, iterations=len(state.history), max_residual=rep.dynamics_max(),
        history=[vars(h) for h in state.history],
    )
    return x_star, report
