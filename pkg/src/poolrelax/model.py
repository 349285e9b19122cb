"""Pooling instances, schedules, and exact residuals of the original problem.

Nodes are numbered 0-based as sources, then intermediate tanks, then plants.
Time index ``t`` runs over ``0..MT-1`` for per-step quantities (flows,
supplies, demands, shortages) and over ``0..MT`` for states (``p[t]`` is the
stock at the start of step ``t``; ``p[MT]`` is the terminal stock).
"""

from dataclasses import dataclass, field

import numpy as np

SOURCE = "source"
INTERMEDIATE = "intermediate"
PLANT = "plant"
KINDS = (SOURCE, INTERMEDIATE, PLANT)

TOL_FEAS = 1e-6

# families that encode the flow/mixing equations themselves
DYNAMICS_FAMILIES = ("source_balance", "source_quality", "tank_balance", "tank_quality", "plant_quality")
BOUND_FAMILIES = ("flow_bounds", "one_pipeline", "source_nonneg", "storage")
ALL_FAMILIES = DYNAMICS_FAMILIES + BOUND_FAMILIES + ("source_terminal", "shortage")


class ModelError(ValueError):
    """Structural problem with an instance or a schedule."""


@dataclass(frozen=True)
class Arc:
    """Pipeline ``tail -> head`` with flow bounds and unit transport cost."""

    tail: int
    head: int
    L: float
    U: float
    CA: float


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


class Instance:
    """Immutable time-discretized pooling network.

    Parameters
    ----------
    n_source, n_inter, n_plant : int
        Node counts; ids are assigned in that order.
    arcs : sequence of Arc
    MT : int
        Number of time steps.
    SA, SQ : array (n_source, MT)
        Supplied quantity and quality per source and step.
    RC, RQ : array (n_plant, MT)
        Required quantity and quality per plant and step.
    CQ : array (n_plant,)
        Shortage penalty per plant.
    p1, q1 : array (V,)
        Initial quantity and quality (plant entries ignored).
    pmin, pmax : array (V,)
        Storage bounds; only intermediate entries are binding.
    """

    def __init__(self, n_source, n_inter, n_plant, arcs, MT, SA, SQ, RC, RQ, CQ, p1, q1, pmin, pmax,
                 name="instance"):
        self.n_source = int(n_source)
        self.n_inter = int(n_inter)
        self.n_plant = int(n_plant)
        self.MT = int(MT)
        self.name = name
        V = self.V
        self.arcs = tuple(arcs)
        self.SA = _frozen(np.reshape(SA, (self.n_source, self.MT)))
        self.SQ = _frozen(np.reshape(SQ, (self.n_source, self.MT)))
        self.RC = _frozen(np.reshape(RC, (self.n_plant, self.MT)))
        self.RQ = _frozen(np.reshape(RQ, (self.n_plant, self.MT)))
        self.CQ = _frozen(np.reshape(CQ, (self.n_plant,)))
        self.p1 = _frozen(np.reshape(p1, (V,)))
        self.q1 = _frozen(np.reshape(q1, (V,)))
        self.pmin = _frozen(np.reshape(pmin, (V,)))
        self.pmax = _frozen(np.reshape(pmax, (V,)))
        self.tail = _frozen([a.tail for a in self.arcs], int)
        self.head = _frozen([a.head for a in self.arcs], int)
        self.L = _frozen([a.L for a in self.arcs])
        self.U = _frozen([a.U for a in self.arcs])
        self.CA = _frozen([a.CA for a in self.arcs])
        ins = [[] for _ in range(V)]
        outs = [[] for _ in range(V)]
        for e, a in enumerate(self.arcs):
            if not (0 <= a.tail < V and 0 <= a.head < V):
                raise ModelError(f"arc {e} has invalid endpoints ({a.tail}, {a.head})")
            outs[a.tail].append(e)
            ins[a.head].append(e)
        self.in_arcs = tuple(tuple(x) for x in ins)
        self.out_arcs = tuple(tuple(x) for x in outs)
        self.validate()

    # --- node helpers ----------------------------------------------------
    @property
    def V(self):
        return self.n_source + self.n_inter + self.n_plant

    @property
    def n_arcs(self):
        return len(self.arcs)

    @property
    def sources(self):
        return range(0, self.n_source)

    @property
    def inters(self):
        return range(self.n_source, self.n_source + self.n_inter)

    @property
    def plants(self):
        return range(self.n_source + self.n_inter, self.V)

    @property
    def storage_nodes(self):
        """Sources and intermediate tanks (nodes that carry a stock)."""
        return range(0, self.n_source + self.n_inter)

    def kind(self, i):
        if i < self.n_source:
            return SOURCE
        if i < self.n_source + self.n_inter:
            return INTERMEDIATE
        if i < self.V:
            return PLANT
        raise ModelError(f"node {i} out of range")

    def plant_index(self, i):
        return i - self.n_source - self.n_inter

    def arc_index(self, tail, head):
        for e in self.out_arcs[tail]:
            if self.arcs[e].head == head:
                return e
        return None

    def validate(self):
        V = self.V
        rank = {SOURCE: 0, INTERMEDIATE: 1, PLANT: 2}
        if self.MT < 1:
            raise ModelError("horizon must have at least one step")
        for e, a in enumerate(self.arcs):
            if not (0 <= a.tail < V and 0 <= a.head < V) or a.tail == a.head:
                raise ModelError(f"arc {e} has invalid endpoints ({a.tail}, {a.head})")
            kt, kh = self.kind(a.tail), self.kind(a.head)
            if not (rank[kt] < rank[kh] or kt == kh == INTERMEDIATE):
                raise ModelError(f"arc {e} runs {kt} -> {kh}")
            if not (0 <= a.L <= a.U) or not np.isfinite(a.U) or a.CA < 0:
                raise ModelError(f"arc {e} has invalid bounds or cost")
        for arr, nm in ((self.SA, "SA"), (self.SQ, "SQ"), (self.RC, "RC"), (self.RQ, "RQ"), (self.CQ, "CQ"),
                        (self.p1, "p1"), (self.q1, "q1"), (self.pmin, "pmin")):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ModelError(f"{nm} must be finite and nonnegative")
        if np.any(self.pmax < 0):
            raise ModelError("pmax must be nonnegative")
        if np.any(self.RC <= 0):
            raise ModelError("RC must be positive for every plant and step")
        for i in self.inters:
            if self.pmin[i] > self.pmax[i]:
                raise ModelError(f"pmin > pmax at node {i}")

    def window(self, t0, p_start, q_start):
        """Sub-instance on steps ``t0..MT-1`` with the given starting state."""
        if not 0 <= t0 < self.MT:
            raise ModelError("window start outside horizon")
        p1 = np.array(p_start, dtype=float)
        q1 = np.array(q_start, dtype=float)
        return Instance(
            self.n_source, self.n_inter, self.n_plant, self.arcs, self.MT - t0,
            self.SA[:, t0:], self.SQ[:, t0:], self.RC[:, t0:], self.RQ[:, t0:], self.CQ,
            np.maximum(p1, 0.0), np.maximum(q1, 0.0), self.pmin, self.pmax, name=f"{self.name}[{t0}:]",
        )

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        same_shape = (self.n_source, self.n_inter, self.n_plant, self.MT, self.arcs) == \
            (other.n_source, other.n_inter, other.n_plant, other.MT, other.arcs)
        return same_shape and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("SA", "SQ", "RC", "RQ", "CQ", "p1", "q1", "pmin", "pmax")
        )

    def __repr__(self):
        return (f"Instance({self.name!r}, S={self.n_source}, I={self.n_inter}, P={self.n_plant}, "
                f"MT={self.MT}, arcs={self.n_arcs})")


@dataclass
class Schedule:
    """Full assignment over the horizon.

    ``a``/``u``: (MT, n_arcs); ``p``/``q``: (MT+1, V); ``v``: (MT, n_plant).
    Plant stocks are unused and kept at zero; plant qualities live in ``q``.
    """

    a: np.ndarray
    p: np.ndarray
    q: np.ndarray
    u: np.ndarray
    v: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, inst):
        MT, nA, V = inst.MT, inst.n_arcs, inst.V
        return cls(np.zeros((MT, nA)), np.zeros((MT + 1, V)), np.zeros((MT + 1, V)),
                   np.zeros((MT, nA), dtype=np.int8), np.zeros((MT, inst.n_plant)))

    def copy(self):
        return Schedule(self.a.copy(), self.p.copy(), self.q.copy(), self.u.copy(), self.v.copy(),
                        dict(self.meta))

    def check_dims(self, inst):
        MT, nA, V = inst.MT, inst.n_arcs, inst.V
        want = {"a": (MT, nA), "p": (MT + 1, V), "q": (MT + 1, V), "u": (MT, nA), "v": (MT, inst.n_plant)}
        for k, shp in want.items():
            if np.shape(getattr(self, k)) != shp:
                raise ModelError(f"schedule field {k} has shape {np.shape(getattr(self, k))}, expected {shp}")


def objective(inst, s):
    """Transport cost plus shortage penalty of the original problem."""
    return float(np.sum(s.a * inst.CA[None, :]) + np.sum(inst.CQ[:, None] * inst.RC * s.v.T))


@dataclass(frozen=True)
class ResidualReport:
    """Per-family residual arrays (nonnegative) and their maxima."""

    families: dict

    def max(self, names=None):
        names = self.families.keys() if names is None else names
        return max((float(np.max(self.families[k], initial=0.0)) for k in names), default=0.0)

    def family_max(self):
        return {k: float(np.max(v, initial=0.0)) for k, v in self.families.items()}

    def dynamics_max(self):
        return self.max(DYNAMICS_FAMILIES)

    def feasible(self, tol=TOL_FEAS, include_terminal=True):
        names = [k for k in self.families if include_terminal or k != "source_terminal"]
        return self.max(names) <= tol


def residuals(inst, s):
    """Violation of every constraint family of the original pooling problem."""
    s.check_dims(inst)
    MT = inst.MT
    a, p, q, u, v = s.a, s.p, s.q, s.u, s.v
    fam = {}
    L, U = inst.L[None, :], inst.U[None, :]
    fam["flow_bounds"] = np.maximum.reduce([u * L - a, a - u * U, -a, np.zeros_like(a)])
    ub = np.asarray(u, dtype=float)
    bin_viol = np.minimum(np.abs(ub), np.abs(ub - 1.0))
    per_node = np.zeros((MT, inst.V))
    for i in range(inst.V):
        inc = list(inst.in_arcs[i]) + list(inst.out_arcs[i])
        if inc:
            per_node[:, i] = np.maximum(ub[:, inc].sum(axis=1) - 1.0, 0.0)
    per_node += np.array([bin_viol[:, list(inst.in_arcs[i]) + list(inst.out_arcs[i])].max(axis=1, initial=0.0)
                          for i in range(inst.V)]).T
    fam["one_pipeline"] = per_node

    S = list(inst.sources)
    out_flow = np.zeros((MT, inst.V))
    in_flow = np.zeros((MT, inst.V))
    in_mass = np.zeros((MT, inst.V))
    for e in range(inst.n_arcs):
        j, k = inst.tail[e], inst.head[e]
        out_flow[:, j] += a[:, e]
        in_flow[:, k] += a[:, e]
        in_mass[:, k] += a[:, e] * q[:MT, j]

    ns = inst.n_source
    fam["source_balance"] = np.abs(p[1:, :ns] - p[:MT, :ns] - inst.SA.T + out_flow[:, :ns])
    fam["source_nonneg"] = np.maximum(-p[:, :ns], 0.0)
    fam["source_terminal"] = np.abs(p[MT, :ns])
    fam["source_quality"] = np.abs(
        p[1:, :ns] * q[1:, :ns] - p[:MT, :ns] * q[:MT, :ns] - inst.SA.T * inst.SQ.T + out_flow[:, :ns] * q[:MT, :ns]
    )
    I = slice(ns, ns + inst.n_inter)
    fam["tank_balance"] = np.abs(p[1:, I] - p[:MT, I] - in_flow[:, I] + out_flow[:, I])
    fam["storage"] = np.maximum.reduce([inst.pmin[None, I] - p[:, I], p[:, I] - inst.pmax[None, I],
                                        np.zeros_like(p[:, I])])
    fam["tank_quality"] = np.abs(
        p[1:, I] * q[1:, I] - p[:MT, I] * q[:MT, I] - in_mass[:, I] + out_flow[:, I] * q[:MT, I]
    )
    P = slice(ns + inst.n_inter, inst.V)
    fam["plant_quality"] = np.abs(q[:MT, P] - in_mass[:, P] / inst.RC.T)
    fam["shortage"] = np.maximum.reduce([inst.RQ.T - q[:MT, P] - v, -v, np.zeros_like(v)])
    del S
    return ResidualReport(fam)


def sucs_ratio(inst, s):
    """Share of the total plant quality requirement that is met."""
    total = float(inst.RQ.sum())
    if total <= 0:
        raise ModelError("sucs ratio undefined when total requirement is zero")
    return float(np.clip((total - float(np.sum(s.v))) / total, 0.0, 1.0))


def mix_forward(inst, a, p, q_start=None, diagnostics=None):
    """Forward quality recursion for given flows and stocks.

    Qualities at step ``t+1`` follow from stocks and flows at step ``t``; a
    node whose next stock is zero gets quality zero.  Plant qualities are the
    flow-weighted averages of feeder qualities divided by ``RC``.
    Returns ``(q, v)``.
    """
    MT = inst.MT
    q = np.zeros((MT + 1, inst.V))
    q0 = inst.q1 if q_start is None else q_start
    q[0, : inst.n_source + inst.n_inter] = q0[: inst.n_source + inst.n_inter]
    ns, ni = inst.n_source, inst.n_inter
    for t in range(MT):
        mass = np.zeros(inst.V)
        outf = np.zeros(inst.V)
        for e in range(inst.n_arcs):
            j, k = inst.tail[e], inst.head[e]
            mass[k] += a[t, e] * q[t, j]
            outf[j] += a[t, e]
        for i in inst.plants:
            q[t, i] = mass[i] / inst.RC[inst.plant_index(i), t]
        for i in range(ns + ni):
            supply = inst.SA[i, t] * inst.SQ[i, t] if i < ns else 0.0
            num = p[t, i] * q[t, i] + supply + mass[i] - outf[i] * q[t, i]
            den = p[t + 1, i]
            if den > 0:
                q[t + 1, i] = num / den
            else:
                q[t + 1, i] = 0.0
                if diagnostics is not None and abs(num) > 0:
                    diagnostics.append(("empty_node", t + 1, i, float(num)))
    v = np.maximum(0.0, inst.RQ.T - q[:MT, ns + ni:])
    return q, v


def stocks_from_flows(inst, a, p_start=None):
    """Roll stocks forward from the balance equations."""
    MT = inst.MT
    p = np.zeros((MT + 1, inst.V))
    p0 = inst.p1 if p_start is None else p_start
    ns, ni = inst.n_source, inst.n_inter
    p[0, : ns + ni] = p0[: ns + ni]
    for t in range(MT):
        net = np.zeros(inst.V)
        np.add.at(net, inst.head, a[t])
        np.subtract.at(net, inst.tail, a[t])
        p[t + 1, : ns + ni] = p[t, : ns + ni] + net[: ns + ni]
        p[t + 1, :ns] += inst.SA[:, t]
    return p


def simulate(inst, a, u=None):
    """Schedule produced by applying balance and mixing equations exactly."""
    a = np.asarray(a, dtype=float)
    p = stocks_from_flows(inst, a)
    q, v = mix_forward(inst, a, p)
    if u is None:
        u = (a > 0).astype(np.int8)
    return Schedule(a.copy(), p, q, np.asarray(u, dtype=np.int8).copy(), v)
