"""Static (single-period) pooling problems in P-formulation.

Benchmark sets such as Foulds 3/4/5 have no time dimension: a pool's inflow
equals its outflow and its quality is the inflow-weighted mix.  The
time-discretized :class:`~poolrelax.model.Instance` carries storage across
steps and cannot express that, so these files map straight to a
:class:`~poolrelax.qcqp.Qcqp`.

File layout (``#`` starts a comment, ids are 1-based and global in the order
sources, pools, terminals; ``K`` is the number of quality attributes)::

    poolrelax-pformulation 1
    name <text>
    qualities <K>
    sources
    <id> <unit cost> <max supply|inf> <quality_1> .. <quality_K>
    pools
    <id> <capacity|inf>
    terminals
    <id> <unit price> <max demand|inf> <max quality_1> .. <max quality_K>
    arcs
    <from> <to> <max flow|inf>
    end

Variables are arc flows followed by pool qualities (pool-major, attribute
minor).  The objective is cost minus revenue.  Pool balance is a hard
equality written as two inequalities, pool quality balance is a penalty
band, and capacities, supplies, demands and terminal quality limits are
inequalities.  Pool qualities are boxed by the range of source qualities,
and a pool's intake is capped by what its outlets can carry.
"""

from dataclasses import dataclass

import numpy as np

from .qcqp import BAND, DEFAULT_DELTA, LE, QcqpBuilder

HEADER = "poolrelax-pformulation 1"

_SECTIONS = ("sources", "pools", "terminals", "arcs")


class PFormatError(ValueError):
    def __init__(self, message, line=None, column=None):
        where = f"line {line}" + (f", column {column}" if column else "") if line else ""
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class PFormulation:
    name: str
    K: int
    cost: np.ndarray  # per source
    supply: np.ndarray
    src_quality: np.ndarray  # (n_source, K)
    capacity: np.ndarray  # per pool
    price: np.ndarray  # per terminal
    demand: np.ndarray
    max_quality: np.ndarray  # (n_terminal, K)
    arcs: tuple  # ((tail, head, U), ...) with 0-based ids

    @property
    def n_source(self):
        return len(self.cost)

    @property
    def n_pool(self):
        return len(self.capacity)

    @property
    def n_terminal(self):
        return len(self.price)

    def kind(self, i):
        if i < self.n_source:
            return "source"
        if i < self.n_source + self.n_pool:
            return "pool"
        return "terminal"


def _num(tok, lineno, col):
    try:
        v = float(tok)
    except ValueError:
        raise PFormatError(f"expected a number, got {tok!r}", lineno, col) from None
    if np.isnan(v):
        raise PFormatError("NaN is not allowed", lineno, col)
    return v


def parse(text):
    """Parse the layout above; errors carry line and column."""
    lines = text.splitlines()
    body = [(k + 1, ln.split("#", 1)[0].split()) for k, ln in enumerate(lines)]
    body = [(k, toks) for k, toks in body if toks]
    if not body or " ".join(body[0][1]) != HEADER:
        raise PFormatError(f"first line must be {HEADER!r}", body[0][0] if body else 1)
    name, K = "pformulation", None
    recs = {s: [] for s in _SECTIONS}
    section = None
    ended = False
    for lineno, toks in body[1:]:
        if ended:
            raise PFormatError("content after 'end'", lineno)
        head = toks[0]
        if head == "name" and section is None:
            name = " ".join(toks[1:])
        elif head == "qualities" and section is None:
            K = int(_num(toks[1], lineno, 2)) if len(toks) == 2 else None
            if K is None or K < 1:
                raise PFormatError("'qualities' needs one positive integer", lineno)
        elif head in _SECTIONS:
            section = head
        elif head == "end":
            ended = True
        elif section is None:
            raise PFormatError(f"unexpected {head!r} before any section", lineno, 1)
        else:
            recs[section].append((lineno, toks))
    if not ended:
        raise PFormatError("missing 'end'", len(lines))
    if K is None:
        raise PFormatError("missing 'qualities' line")
    widths = {"sources": 3 + K, "pools": 2, "terminals": 3 + K, "arcs": 3}
    vals = {}
    for s in _SECTIONS:
        rows = []
        for lineno, toks in recs[s]:
            if len(toks) != widths[s]:
                raise PFormatError(f"{s} rows need {widths[s]} fields, got {len(toks)}", lineno)
            rows.append((lineno, [_num(t, lineno, c + 1) for c, t in enumerate(toks)]))
        vals[s] = rows
    ns, npool, nt = len(vals["sources"]), len(vals["pools"]), len(vals["terminals"])
    expect = 1
    for s in ("sources", "pools", "terminals"):
        for lineno, r in vals[s]:
            if r[0] != expect:
                raise PFormatError(f"expected id {expect}, got {r[0]:g}", lineno, 1)
            expect += 1
    V = ns + npool + nt
    arcs = []
    rank = [0] * ns + [1] * npool + [2] * nt
    for lineno, (a, b, u) in vals["arcs"]:
        i, j = int(a) - 1, int(b) - 1
        if not (0 <= i < V and 0 <= j < V) or a != int(a) or b != int(b):
            raise PFormatError("arc endpoint is not a node id", lineno)
        if rank[i] >= rank[j] or (rank[i] == 0 and rank[j] == 0):
            raise PFormatError("arcs must run source -> pool/terminal or pool -> terminal", lineno)
        if u < 0:
            raise PFormatError("arc bound must be nonnegative", lineno, 3)
        arcs.append((i, j, u))
    src = np.array([r for _, r in vals["sources"]]).reshape(ns, 3 + K)
    pools = np.array([r for _, r in vals["pools"]]).reshape(npool, 2)
    term = np.array([r for _, r in vals["terminals"]]).reshape(nt, 3 + K)
    return PFormulation(name, K, src[:, 1], src[:, 2], src[:, 3:], pools[:, 1], term[:, 1], term[:, 2],
                        term[:, 3:], tuple(arcs))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def _finite_cap(*vals):
    finite = [v for v in vals if np.isfinite(v)]
    return min(finite) if finite else np.inf


def build_static_qcqp(pf, delta=DEFAULT_DELTA):
    """Penalty QCQP of a static pooling problem (see the module docstring)."""
    nA = len(pf.arcs)
    ns, npool = pf.n_source, pf.n_pool
    n = nA + npool * pf.K

    def qv(pool, k):
        return nA + (pool - ns) * pf.K + k

    b = QcqpBuilder(n, delta)
    outs = {}
    ins = {}
    for e, (i, j, _) in enumerate(pf.arcs):
        outs.setdefault(i, []).append(e)
        ins.setdefault(j, []).append(e)
    # a pool can never take in more than its outlets can carry away
    out_cap = {}
    for e, (i, j, u) in enumerate(pf.arcs):
        if ns <= i < ns + npool:
            lim = _finite_cap(u, pf.demand[j - ns - npool])
            out_cap[i] = out_cap.get(i, 0.0) + lim
    pool_cap = np.array([_finite_cap(pf.capacity[p], out_cap.get(ns + p, 0.0)) for p in range(npool)])
    for e, (i, j, u) in enumerate(pf.arcs):
        cap = [u]
        if i < ns:
            cap.append(pf.supply[i])
            b.c[e] += pf.cost[i]
        elif i < ns + npool:
            cap.append(pool_cap[i - ns])
        if j >= ns + npool:
            cap.append(pf.demand[j - ns - npool])
            b.c[e] -= pf.price[j - ns - npool]
        if j < ns + npool:
            cap.append(pool_cap[j - ns])
        b.lb[e] = 0.0
        b.ub[e] = _finite_cap(*cap)
    lo, hi = pf.src_quality.min(axis=0), pf.src_quality.max(axis=0)
    for p in range(ns, ns + npool):
        for k in range(pf.K):
            b.lb[qv(p, k)], b.ub[qv(p, k)] = lo[k], hi[k]
    for i in range(ns):
        if np.isfinite(pf.supply[i]) and outs.get(i):
            b.row(lin={e: 1.0 for e in outs[i]}, const=-pf.supply[i], sense=LE, family="supply")
    for p in range(ns, ns + npool):
        net = {**{e: 1.0 for e in ins.get(p, [])}, **{e: -1.0 for e in outs.get(p, [])}}
        b.row(lin=net, sense=LE, family="pool_balance")
        b.row(lin={e: -v for e, v in net.items()}, sense=LE, family="pool_balance")
        if np.isfinite(pf.capacity[p - ns]) and ins.get(p):
            b.row(lin={e: 1.0 for e in ins[p]}, const=-pf.capacity[p - ns], sense=LE, family="capacity")
        for k in range(pf.K):
            for e in ins.get(p, []):
                b.add(pf.src_quality[pf.arcs[e][0], k], ("x", e))
            for e in outs.get(p, []):
                b.add(-1.0, ("x", qv(p, k)), ("x", e))
            b.close_row(BAND, "pool_quality")
    for t in range(ns + npool, ns + npool + pf.n_terminal):
        ti = t - ns - npool
        feeders = ins.get(t, [])
        if np.isfinite(pf.demand[ti]) and feeders:
            b.row(lin={e: 1.0 for e in feeders}, const=-pf.demand[ti], sense=LE, family="demand")
        for k in range(pf.K):
            if not np.isfinite(pf.max_quality[ti, k]):
                continue
            for e in feeders:
                i = pf.arcs[e][0]
                if i < ns:
                    b.add(pf.src_quality[i, k], ("x", e))
                else:
                    b.add(1.0, ("x", qv(i, k)), ("x", e))
                b.add(-pf.max_quality[ti, k], ("x", e))
            b.close_row(LE, "terminal_quality")
    return b.build(meta={"pformulation": pf, "n_flows": nA})
