"""Independent optimality certificate for a cone-program solution.

Everything is recomputed from the raw program data and the returned
primal/dual vectors; no solver internals are consulted.
"""

from dataclasses import dataclass

import numpy as np

from .program import cone_violation


@dataclass(frozen=True)
class Certificate:
    """Per-check measures and the tolerance they were judged against."""

    primal_residual: float
    primal_cone: float
    dual_residual: float
    dual_cone: float
    gap: float
    tol: float

    @property
    def primal_ok(self):
        return max(self.primal_residual, self.primal_cone) <= self.tol

    @property
    def dual_ok(self):
        return max(self.dual_residual, self.dual_cone) <= self.tol

    @property
    def gap_ok(self):
        return self.gap <= self.tol

    @property
    def passed(self):
        return self.primal_ok and self.dual_ok and self.gap_ok

    def summary(self):
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag} primal {self.primal_residual:.2e}/{self.primal_cone:.2e} "
                f"dual {self.dual_residual:.2e}/{self.dual_cone:.2e} gap {self.gap:.2e} (tol {self.tol:.0e})")


def certify(sol, prog, tol=1e-7):
    """Check primal feasibility, dual feasibility and the duality gap.

    Measures are relative: primal rows against ``1 + max|b|, max|h|``, the dual
    row against ``1 + max|c|`` and the gap against ``1 + |c'x|``.  The dual
    problem is ``max -b'y - h'z`` subject to ``A'y + G'z + c = 0``, ``z`` in K.
    """
    x, y, z = np.asarray(sol.x, float), np.asarray(sol.y, float), np.asarray(sol.z, float)
    l, q = prog.n_nonneg, prog.soc_dims
    nb = 1.0 + max(np.abs(prog.b).max(initial=0.0), np.abs(prog.h).max(initial=0.0))
    nc = 1.0 + np.abs(prog.c).max(initial=0.0)
    eq = np.abs(prog.A @ x - prog.b).max(initial=0.0) if prog.p else 0.0
    slack = prog.h - prog.G @ x
    pcone = cone_violation(slack, l, q)
    dres = np.abs(prog.A.T @ y + prog.G.T @ z + prog.c).max(initial=0.0)
    dcone = cone_violation(z, l, q)
    pobj = float(prog.c @ x)
    dobj = float(-(prog.b @ y) - prog.h @ z)
    return Certificate(
        primal_residual=float(eq / nb),
        primal_cone=float(pcone / nb),
        dual_residual=float(dres / nc),
        dual_cone=float(dcone / nc),
        gap=abs(pobj - dobj) / (1.0 + abs(pobj)),
        tol=tol,
    )
