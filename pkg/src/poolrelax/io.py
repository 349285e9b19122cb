"""Text format for pooling instances.

Layout (``#`` starts a comment; blank lines are ignored; node ids and time
steps are 1-based)::

    poolrelax-instance 1
    name <text>
    horizon <MT>
    nodes
    <id> <source|intermediate|plant> <p1> <q1> <pmin> <pmax>
    arcs
    <from> <to> <L> <U> <CA>
    supply
    <source id> <t> <SA> <SQ>
    demand
    <plant id> <t> <RC> <RQ> <CQ>
    end

Node ids must appear in order and be grouped as sources, intermediates,
plants.  Every source needs a supply row and every plant a demand row for
each step; ``CQ`` must be the same on all rows of a plant.  Numbers are
written with ``repr`` so a write/read cycle reproduces every value exactly.
"""

import numpy as np

from .model import INTERMEDIATE, KINDS, PLANT, SOURCE, Arc, Instance, ModelError

HEADER = "poolrelax-instance 1"
SECTIONS = ("nodes", "arcs", "supply", "demand")
_WIDTH = {"nodes": 6, "arcs": 5, "supply": 4, "demand": 5}


class ParseError(ValueError):
    """Malformed instance text; ``line``/``column`` are 1-based."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(loc + message)


def _tokens(raw):
    """Tokens of a line with their 1-based starting columns."""
    out = []
    text = raw.split("#", 1)[0]
    col = 0
    for tok in text.split():
        col = text.index(tok, col)
        out.append((tok, col + 1))
        col += len(tok)
    return out


def _float(tok, line, col):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", line, col) from None
    if not np.isfinite(v):
        raise ParseError(f"value must be finite, got {tok!r}", line, col)
    return v


def _int(tok, line, col):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok!r}", line, col) from None


def loads(text):
    """Parse instance text into an :class:`Instance`."""
    lines = text.splitlines()
    rows = [(k + 1, _tokens(raw)) for k, raw in enumerate(lines)]
    rows = [(k, t) for k, t in rows if t]
    if not rows or " ".join(tok for tok, _ in rows[0][1]) != HEADER:
        raise ParseError(f"first line must be {HEADER!r}", rows[0][0] if rows else 1, 1)
    name = "instance"
    MT = None
    section = None
    done = False
    recs = {s: [] for s in SECTIONS}
    for ln, toks in rows[1:]:
        head, hcol = toks[0]
        if done:
            raise ParseError("content after 'end'", ln, hcol)
        if head in SECTIONS and len(toks) == 1:
            section = head
        elif head == "end" and len(toks) == 1:
            done = True
        elif section is None and head == "name":
            name = " ".join(tok for tok, _ in toks[1:]) or name
        elif section is None and head == "horizon":
            if len(toks) != 2:
                raise ParseError("'horizon' takes one integer", ln, hcol)
            MT = _int(toks[1][0], ln, toks[1][1])
            if MT < 1:
                raise ParseError("horizon must be at least 1", ln, toks[1][1])
        elif section is None:
            raise ParseError(f"unexpected {head!r} outside a section", ln, hcol)
        else:
            if len(toks) != _WIDTH[section]:
                raise ParseError(f"{section} rows have {_WIDTH[section]} fields, got {len(toks)}", ln, hcol)
            recs[section].append((ln, toks))
    if not done:
        raise ParseError("missing 'end'", len(lines), 1)
    if MT is None:
        raise ParseError("missing 'horizon'", 1, 1)

    kinds, p1, q1, pmin, pmax = [], [], [], [], []
    for expect, (ln, toks) in enumerate(recs["nodes"], start=1):
        nid = _int(toks[0][0], ln, toks[0][1])
        if nid != expect:
            raise ParseError(f"node ids must run 1, 2, ...; expected {expect}, got {nid}", ln, toks[0][1])
        kind = toks[1][0]
        if kind not in KINDS:
            raise ParseError(f"unknown node kind {kind!r}", ln, toks[1][1])
        if kinds and KINDS.index(kind) < KINDS.index(kinds[-1]):
            raise ParseError("nodes must be grouped as sources, intermediates, plants", ln, toks[1][1])
        kinds.append(kind)
        vals = [_float(tok, ln, col) for tok, col in toks[2:]]
        for arr, v in zip((p1, q1, pmin, pmax), vals):
            arr.append(v)
    V = len(kinds)
    ns, ni, npl = kinds.count(SOURCE), kinds.count(INTERMEDIATE), kinds.count(PLANT)

    def node(tok, ln, col, want=None):
        i = _int(tok, ln, col)
        if not 1 <= i <= V:
            raise ParseError(f"node {i} does not exist", ln, col)
        if want is not None and kinds[i - 1] != want:
            raise ParseError(f"node {i} is not a {want}", ln, col)
        return i - 1

    def step(tok, ln, col):
        t = _int(tok, ln, col)
        if not 1 <= t <= MT:
            raise ParseError(f"time step {t} outside 1..{MT}", ln, col)
        return t - 1

    arcs = []
    for ln, toks in recs["arcs"]:
        a = node(toks[0][0], ln, toks[0][1])
        b = node(toks[1][0], ln, toks[1][1])
        L, U, CA = (_float(tok, ln, col) for tok, col in toks[2:])
        arcs.append(Arc(a, b, L, U, CA))

    SA = np.full((ns, MT), np.nan)
    SQ = np.full((ns, MT), np.nan)
    for ln, toks in recs["supply"]:
        i = node(toks[0][0], ln, toks[0][1], SOURCE)
        t = step(toks[1][0], ln, toks[1][1])
        if not np.isnan(SA[i, t]):
            raise ParseError(f"duplicate supply row for node {i + 1}, step {t + 1}", ln, toks[0][1])
        SA[i, t], SQ[i, t] = (_float(tok, ln, col) for tok, col in toks[2:])
    RC = np.full((npl, MT), np.nan)
    RQ = np.full((npl, MT), np.nan)
    CQ = np.full(npl, np.nan)
    for ln, toks in recs["demand"]:
        i = node(toks[0][0], ln, toks[0][1], PLANT)
        t = step(toks[1][0], ln, toks[1][1])
        k = i - ns - ni
        if not np.isnan(RC[k, t]):
            raise ParseError(f"duplicate demand row for node {i + 1}, step {t + 1}", ln, toks[0][1])
        RC[k, t], RQ[k, t], cq = (_float(tok, ln, col) for tok, col in toks[2:])
        if not np.isnan(CQ[k]) and CQ[k] != cq:
            raise ParseError(f"CQ of plant {i + 1} differs between steps", ln, toks[4][1])
        CQ[k] = cq
    if np.isnan(SA).any():
        i, t = np.argwhere(np.isnan(SA))[0]
        raise ParseError(f"missing supply row for node {i + 1}, step {t + 1}")
    if np.isnan(RC).any():
        k, t = np.argwhere(np.isnan(RC))[0]
        raise ParseError(f"missing demand row for node {ns + ni + k + 1}, step {t + 1}")
    try:
        return Instance(ns, ni, npl, arcs, MT, SA, SQ, RC, RQ, CQ, p1, q1, pmin, pmax, name=name)
    except ModelError as exc:
        raise ParseError(str(exc)) from None


def dumps(inst):
    """Instance text that :func:`loads` maps back to an equal instance."""
    r = repr
    out = [HEADER, f"name {inst.name}", f"horizon {inst.MT}", "nodes"]
    for i in range(inst.V):
        out.append(f"{i + 1} {inst.kind(i)} {r(float(inst.p1[i]))} {r(float(inst.q1[i]))} "
                   f"{r(float(inst.pmin[i]))} {r(float(inst.pmax[i]))}")
    out.append("arcs")
    for a in inst.arcs:
        out.append(f"{a.tail + 1} {a.head + 1} {r(float(a.L))} {r(float(a.U))} {r(float(a.CA))}")
    out.append("supply")
    for i in inst.sources:
        for t in range(inst.MT):
            out.append(f"{i + 1} {t + 1} {r(float(inst.SA[i, t]))} {r(float(inst.SQ[i, t]))}")
    out.append("demand")
    for i in inst.plants:
        k = inst.plant_index(i)
        for t in range(inst.MT):
            out.append(f"{i + 1} {t + 1} {r(float(inst.RC[k, t]))} {r(float(inst.RQ[k, t]))} "
                       f"{r(float(inst.CQ[k]))}")
    out.append("end")
    return "\n".join(out) + "\n"


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dump(inst, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(inst))


def dump_schedule(inst, s, path):
    """Schedule arrays as a compressed ``.npz`` archive."""
    np.savez_compressed(path, a=s.a, p=s.p, q=s.q, u=s.u, v=s.v, MT=inst.MT)
