"""Interchangeable cone-program backends behind one ``solve`` contract."""

import time

import numpy as np
from scipy.optimize import linprog

from .ipm import (DUAL_INFEASIBLE, ITER_LIMIT, OPTIMAL, PRIMAL_INFEASIBLE, InteriorPointSolver, Solution,
                  SolverConfig)


class BackendError(RuntimeError):
    """Requested backend cannot handle the program."""


class ReferenceBackend:
    """The in-package homogeneous interior-point solver."""

    name = "reference"

    def solve(self, prog, config=None):
        return InteriorPointSolver(config or SolverConfig()).solve(prog)


class HighsBackend:
    """HiGHS through scipy, for programs with only a nonnegative orthant."""

    name = "highs"

    _STATUS = {0: OPTIMAL, 1: ITER_LIMIT, 2: PRIMAL_INFEASIBLE, 3: DUAL_INFEASIBLE, 4: ITER_LIMIT}

    def solve(self, prog, config=None):
        if prog.soc_dims:
            raise BackendError("the HiGHS backend only accepts linear programs")
        cfg = config or SolverConfig()
        t0 = time.perf_counter()
        res = linprog(
            prog.c, A_ub=prog.G if prog.m else None, b_ub=prog.h if prog.m else None,
            A_eq=prog.A if prog.p else None, b_eq=prog.b if prog.p else None,
            bounds=(None, None), method="highs",
            options={"primal_feasibility_tolerance": min(1e-7, cfg.tol_feas_primal * 10),
                     "dual_feasibility_tolerance": min(1e-7, cfg.tol_feas_dual * 10)},
        )
        status = self._STATUS.get(res.status, ITER_LIMIT)
        if status != OPTIMAL:
            return Solution(status, None, None, None, None, np.nan, np.nan, int(getattr(res, "nit", 0)),
                            np.inf, np.inf, np.inf, time.perf_counter() - t0, {"message": res.message})
        x = np.asarray(res.x)
        y = -np.asarray(res.eqlin.marginals) if prog.p else np.zeros(0)
        z = -np.asarray(res.ineqlin.marginals) if prog.m else np.zeros(0)
        s = prog.h - prog.G @ x
        obj = float(prog.c @ x + prog.offset)
        dual_obj = float(-prog.b @ y - prog.h @ z + prog.offset)
        pres = float(max(np.abs(prog.A @ x - prog.b).max(initial=0.0), np.maximum(-s, 0).max(initial=0.0)))
        dres = float(np.abs(prog.A.T @ y + prog.G.T @ z + prog.c).max(initial=0.0))
        gap = abs(obj - dual_obj) / (1.0 + abs(obj))
        return Solution(OPTIMAL, x, y, z, s, obj, dual_obj, int(res.nit), pres, dres, gap,
                        time.perf_counter() - t0, {"message": res.message})


_BACKENDS = {"reference": ReferenceBackend, "highs": HighsBackend}


def get_backend(name):
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise BackendError(f"unknown backend {name!r}; choose from {sorted(_BACKENDS)}") from None


def available_backends():
    return sorted(_BACKENDS)
