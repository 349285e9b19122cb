"""Conic program container and its textual dump format.

A program is

    minimize    c^T x + offset
    subject to  A x = b
                G x + s = h,   s in K

where ``K`` is a nonnegative orthant of dimension ``dims["l"]`` followed by
second-order cones of sizes ``dims["q"]``.  A cone ``(t, u)`` means
``||u|| <= t``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DUMP_HEADER = "# poolrelax conic program v1"


class ProgramError(ValueError):
    """Raised for structurally invalid programs or malformed dump files."""


@dataclass(frozen=True)
class ConicProgram:
    """Cone program in the form described in the module docstring.

    ``kind`` is a free-form tag ("LP", "SOCP", ...) and ``meta`` carries
    builder-specific bookkeeping (variable maps, row families).
    """

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    dims: dict
    offset: float = 0.0
    kind: str = "LP"
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        n = len(self.c)
        if n == 0:
            raise ProgramError("program has no variables")
        if self.A.shape != (len(self.b), n):
            raise ProgramError(f"A has shape {self.A.shape}, expected {(len(self.b), n)}")
        if self.G.shape != (len(self.h), n):
            raise ProgramError(f"G has shape {self.G.shape}, expected {(len(self.h), n)}")
        q = list(self.dims.get("q", []))
        if any(k < 1 for k in q):
            raise ProgramError("second-order cones need dimension >= 1")
        if self.dims.get("l", 0) + sum(q) != len(self.h):
            raise ProgramError("cone dimensions do not add up to the number of G rows")

    @property
    def n(self):
        return len(self.c)

    @property
    def p(self):
        return len(self.b)

    @property
    def m(self):
        return len(self.h)

    @property
    def n_nonneg(self):
        return int(self.dims.get("l", 0))

    @property
    def soc_dims(self):
        return [int(k) for k in self.dims.get("q", [])]


def make_program(c, A, b, G, h, l, q=(), offset=0.0, kind="LP", meta=None):
    """Build a :class:`ConicProgram` from array-likes, coercing to CSR."""
    c = np.asarray(c, dtype=float).ravel()
    n = len(c)
    b = np.asarray(b if b is not None else [], dtype=float).ravel()
    A = sp.csr_matrix(A, dtype=float) if A is not None else sp.csr_matrix((0, n))
    G = sp.csr_matrix(G, dtype=float) if G is not None else sp.csr_matrix((0, n))
    h = np.asarray(h if h is not None else [], dtype=float).ravel()
    return ConicProgram(c, A, b, G, h, {"l": int(l), "q": [int(k) for k in q]},
                        float(offset), kind, dict(meta or {}))


def cone_violation(s, l, q):
    """Largest amount by which ``s`` leaves the cone (0 when inside)."""
    s = np.asarray(s, dtype=float)
    worst = 0.0
    if l:
        worst = max(worst, float(np.max(-s[:l], initial=0.0)))
    off = l
    for k in q:
        blk = s[off:off + k]
        worst = max(worst, float(np.linalg.norm(blk[1:]) - blk[0]))
        off += k
    return max(worst, 0.0)


def _write_vec(lines, name, v):
    nz = np.flatnonzero(v)
    lines.append(f"{name} {len(nz)}")
    lines.extend(f"{i} {float(v[i])!r}" for i in nz)


def _write_mat(lines, name, M):
    coo = M.tocoo()
    lines.append(f"{name} {coo.nnz}")
    lines.extend(f"{i} {j} {float(x)!r}" for i, j, x in zip(coo.row, coo.col, coo.data))


def dumps(prog):
    """Serialize a program to the sparse textual form.

    Layout: header line, ``dims n p m``, ``cones l <l> q <k> <d1> ... <dk>``,
    ``offset <v>``, ``kind <tag>``, then sections ``c``, ``A``, ``b``, ``G``,
    ``h``, each introduced by ``<name> <count>`` and followed by zero-based
    ``index value`` or ``row col value`` triplets, and a final ``end``.
    """
    lines = [DUMP_HEADER, f"dims {prog.n} {prog.p} {prog.m}"]
    q = prog.soc_dims
    lines.append("cones l {} q {}{}".format(prog.n_nonneg, len(q), "".join(f" {k}" for k in q)))
    lines.append(f"offset {float(prog.offset)!r}")
    lines.append(f"kind {prog.kind}")
    _write_vec(lines, "c", prog.c)
    _write_mat(lines, "A", prog.A)
    _write_vec(lines, "b", prog.b)
    _write_mat(lines, "G", prog.G)
    _write_vec(lines, "h", prog.h)
    lines.append("end")
    return "\n".join(lines) + "\n"


def loads(text):
    """Parse the textual form written by :func:`dumps`."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != DUMP_HEADER:
        raise ProgramError("missing or unsupported header")
    pos = 1

    def take(expect):
        nonlocal pos
        if pos >= len(lines):
            raise ProgramError(f"unexpected end of file, wanted {expect!r}")
        toks = lines[pos].split()
        if toks[0] != expect:
            raise ProgramError(f"line {pos + 1}: expected {expect!r}, got {toks[0]!r}")
        pos += 1
        return toks[1:]

    n, p, m = (int(t) for t in take("dims"))
    toks = take("cones")
    l = int(toks[1])
    nq = int(toks[3])
    q = [int(t) for t in toks[4:4 + nq]]
    offset = float(take("offset")[0])
    kind = take("kind")[0]

    def vec(name, size):
        nonlocal pos
        cnt = int(take(name)[0])
        v = np.zeros(size)
        for ln in lines[pos:pos + cnt]:
            i, x = ln.split()
            v[int(i)] = float(x)
        pos += cnt
        return v

    def mat(name, shape):
        nonlocal pos
        cnt = int(take(name)[0])
        rows = np.zeros(cnt, dtype=int)
        cols = np.zeros(cnt, dtype=int)
        vals = np.zeros(cnt)
        for k, ln in enumerate(lines[pos:pos + cnt]):
            i, j, x = ln.split()
            rows[k], cols[k], vals[k] = int(i), int(j), float(x)
        pos += cnt
        return sp.csr_matrix((vals, (rows, cols)), shape=shape)

    c = vec("c", n)
    A = mat("A", (p, n))
    b = vec("b", p)
    G = mat("G", (m, n))
    h = vec("h", m)
    take("end")
    return ConicProgram(c, A, b, G, h, {"l": l, "q": q}, offset, kind, {})
