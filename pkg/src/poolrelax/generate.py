"""Seeded random pooling instances.

Topology: every source feeds every tank, tanks form a complete directed
graph, and every tank feeds every plant.  All constants are drawn with a
PCG64 stream as integers on a 0.01 grid, so files are reproducible bit for
bit across platforms.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .model import Arc, Instance

GRID = 100  # values are multiples of 1/GRID

# (M_S, M_I, M_P, M_T) of the ten reference network shapes
REFERENCE_SHAPES = (
    (1, 2, 1, 10), (1, 2, 1, 20), (2, 2, 1, 10), (2, 2, 1, 20), (1, 4, 1, 7),
    (1, 4, 1, 14), (2, 4, 2, 28), (2, 4, 2, 28), (10, 18, 7, 2), (8, 20, 10, 2),
)

FAMILIES = ("default", "slack", "starved")


@dataclass(frozen=True)
class GeneratorSpec:
    """Shape, constant ranges, and seed of a generated instance.

    ``family`` adjusts the ranges: ``slack`` adds 20% supply slack, nearly
    full tanks large enough to feed any plant over the whole horizon, and
    tank-to-plant arcs able to carry any single requirement; ``starved``
    keeps all qualities so low that no tank can meet any plant requirement.
    ``supply_slack`` is the minimum ratio of available quantity to total
    demand minus one.
    """

    n_source: int
    n_inter: int
    n_plant: int
    MT: int
    seed: int = 0
    family: str = "default"
    SA: tuple = (5.0, 20.0)
    SQ: tuple = (1.0, 5.0)
    RC: tuple = (3.0, 10.0)
    RQ: tuple = (1.0, 4.0)
    CA: tuple = (1.0, 5.0)
    CQ: tuple = (50.0, 200.0)
    U: tuple = (10.0, 40.0)
    pmax: tuple = (20.0, 60.0)
    init_fill: tuple = (0.25, 0.5)
    supply_slack: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if min(self.n_source, self.n_inter, self.n_plant, self.MT) < 1:
            raise ValueError("all node counts and the horizon must be at least 1")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")


def _draw(rng, rng_range, size):
    lo, hi = (int(round(v * GRID)) for v in rng_range)
    return rng.integers(lo, hi + 1, size=size) / GRID


def family_spec(n_source, n_inter, n_plant, MT, seed, family="default"):
    """Spec with the ranges of a named family filled in."""
    base = GeneratorSpec(n_source, n_inter, n_plant, MT, seed=seed, family=family)
    if family == "slack":
        return replace(base, init_fill=(0.9, 1.0), supply_slack=0.2)
    if family == "starved":
        # every tank's quality mass stays below every requirement: 0.2 * max U < min RC * min RQ
        return replace(base, SQ=(0.05, 0.2), RQ=(3.0, 4.0), supply_slack=0.2)
    return base


def reference_spec(index, seed=0, family="default"):
    """Spec with one of the ten reference shapes (``index`` is 1-based)."""
    return family_spec(*REFERENCE_SHAPES[index - 1], seed=seed, family=family)


def generate(spec):
    """Draw an :class:`Instance` from ``spec``."""
    ns, ni, npl, MT = spec.n_source, spec.n_inter, spec.n_plant, spec.MT
    if ni <= npl:
        warnings.warn("the shortage repair pairs sources with unmatched tanks and needs more tanks than plants",
                      stacklevel=2)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    V = ns + ni + npl
    S = range(ns)
    I = range(ns, ns + ni)
    P = range(ns + ni, V)
    ends = [(s, i) for s in S for i in I] + [(i, j) for i in I for j in I if i != j] + [(i, k) for i in I for k in P]
    U = _draw(rng, spec.U, len(ends))
    CA = _draw(rng, spec.CA, len(ends))
    SA = _draw(rng, spec.SA, (ns, MT))
    SQ = _draw(rng, spec.SQ, (ns, MT))
    RC = _draw(rng, spec.RC, (npl, MT))
    RQ = _draw(rng, spec.RQ, (npl, MT))
    CQ = _draw(rng, spec.CQ, npl)
    pmax = np.zeros(V)
    pmax[ns:ns + ni] = _draw(rng, spec.pmax, ni)
    fill = _draw(rng, spec.init_fill, ni)
    q1 = np.zeros(V)
    q1[:ns + ni] = _draw(rng, spec.SQ, ns + ni)
    p1 = np.zeros(V)
    p1[ns:ns + ni] = np.round(fill * pmax[ns:ns + ni] * GRID) / GRID
    pmin = np.zeros(V)
    if spec.family == "slack":
        # every tank able to feed any plant for the whole horizon on its own
        need = float(RC.sum(axis=1).max())
        cap = np.maximum(pmax[ns:ns + ni], np.ceil(need * GRID) / GRID)
        pmax[ns:ns + ni] = cap
        p1[ns:ns + ni] = np.maximum(p1[ns:ns + ni], np.minimum(cap, np.ceil(need * GRID) / GRID))
        # direct arcs must carry a full requirement
        for e, (_, head) in enumerate(ends):
            if head in P:
                U[e] = max(U[e], float(RC.max()))
    demand = float(RC.sum())
    available = float(SA.sum() + p1.sum())
    target = (1.0 + spec.supply_slack) * demand
    if available < target:
        scale = (target - p1.sum()) / max(float(SA.sum()), 1e-12)
        SA = np.ceil(SA * scale * GRID) / GRID
    arcs = [Arc(a, b, 0.0, float(u), float(c)) for (a, b), u, c in zip(ends, U, CA)]
    name = f"gen_{ns}_{ni}_{npl}_{MT}_{spec.family}_{spec.seed}"
    return Instance(ns, ni, npl, arcs, MT, SA, SQ, RC, RQ, CQ, p1, q1, pmin, pmax, name=name)
