"""Reference computations that share no code with the package under test."""

import itertools

import numpy as np
from scipy.optimize import linprog

BAND = 0  # row sense codes of the QCQP data


def free_product_lp(qp):
    """Optimum of the relaxation with every bilinear product as its own free variable.

    The lifted LP/SOCP bound no diagonal moment entry from above, so their
    pair constraints never bind and only the lifted rows matter.  Solved with
    HiGHS on data read straight from the QCQP arrays.
    """
    N = qp.n_total
    pairs = sorted(set(zip(qp.quad_i.tolist(), qp.quad_j.tolist())) |
                   set(zip(*(list(map(int, a)) for a in qp.obj_quad[:2]))))
    pidx = {p: N + k for k, p in enumerate(pairs)}
    nv = N + len(pairs)
    c = np.zeros(nv)
    c[:N] = qp.c
    for i, j, v in zip(*qp.obj_quad):
        c[pidx[(int(i), int(j))]] += v
    A, b = [], []
    for r in range(len(qp.const)):
        coef = np.zeros(nv)
        for j, v in zip(qp.lin_j[qp.lin_row == r], qp.lin_val[qp.lin_row == r]):
            coef[j] += v
        m = qp.quad_row == r
        for i, j, v in zip(qp.quad_i[m], qp.quad_j[m], qp.quad_val[m]):
            coef[pidx[(int(i), int(j))]] += v
        if qp.sense[r] == BAND:
            lam = qp.lam_index[r]
            for sign in (1.0, -1.0):
                row = sign * coef
                row[lam] -= 1.0
                A.append(row)
                b.append(-sign * qp.const[r])
        else:
            A.append(coef)
            b.append(-qp.const[r])
    bounds = [(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None) for lo, hi in zip(qp.lb, qp.ub)]
    bounds += [(None, None)] * len(pairs)
    res = linprog(c, A_ub=np.array(A).reshape(-1, nv), b_ub=np.array(b), bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9})
    return res.fun + qp.obj_const if res.status == 0 else None


def grid_minimum(qp, step=1e-2, chunk=200_000):
    """Smallest penalized objective over a box grid (tiny QCQPs only).

    For each grid point of the core variables the penalties are set to the
    smallest feasible values; points violating an inequality row are skipped.
    """
    axes = [np.round(np.arange(lo, hi + step / 2, step), 10) for lo, hi in zip(qp.lb[:qp.n], qp.ub[:qp.n])]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, qp.n)
    band = qp.sense == BAND
    best = np.inf
    oi, oj, ov = (np.asarray(a) for a in qp.obj_quad)
    for k in range(0, len(mesh), chunk):
        X = np.zeros((min(chunk, len(mesh) - k), qp.n_total))
        X[:, :qp.n] = mesh[k:k + chunk]
        rows = np.tile(qp.const.astype(float), (len(X), 1))
        for r, i, j, v in zip(qp.quad_row, qp.quad_i, qp.quad_j, qp.quad_val):
            rows[:, r] += v * X[:, i] * X[:, j]
        for r, j, v in zip(qp.lin_row, qp.lin_j, qp.lin_val):
            rows[:, r] += v * X[:, j]
        ok = np.all(rows[:, ~band] <= 1e-12, axis=1)
        X[:, qp.lam_index[band]] = np.abs(rows[:, band])
        val = X @ qp.c + qp.obj_const
        for i, j, v in zip(oi, oj, ov):
            val += v * X[:, int(i)] * X[:, int(j)]
        if ok.any():
            best = min(best, float(val[ok].min()))
    return best


def dense_qcqp_eval(qp, x):
    """Objective and row values from dense symmetric matrices ``Q_k`` (one per row)."""
    N = qp.n_total
    x = np.asarray(x, dtype=float)
    rows = []
    for r in range(len(qp.const)):
        Q = np.zeros((N, N))
        g = np.zeros(N)
        for i, j, v in zip(qp.quad_i[qp.quad_row == r], qp.quad_j[qp.quad_row == r], qp.quad_val[qp.quad_row == r]):
            Q[i, j] += v / 2
            Q[j, i] += v / 2
        for j, v in zip(qp.lin_j[qp.lin_row == r], qp.lin_val[qp.lin_row == r]):
            g[j] += v
        rows.append(x @ Q @ x + g @ x + qp.const[r])
    Q0 = np.zeros((N, N))
    for i, j, v in zip(*qp.obj_quad):
        Q0[int(i), int(j)] += v / 2
        Q0[int(j), int(i)] += v / 2
    return float(x @ Q0 @ x + qp.c @ x + qp.obj_const), np.array(rows)


def vertex_lp(c, A_ub, b_ub, lo, hi, tol=1e-9):
    """Minimum of ``c x`` over ``A_ub x <= b_ub``, ``lo <= x <= hi`` by basic-solution enumeration.

    Every choice of ``n`` active constraints with a nonsingular system is
    solved and kept when feasible.  Returns ``None`` when no vertex is feasible.
    """
    c = np.asarray(c, float)
    n = len(c)
    M = np.vstack([A_ub, np.eye(n), -np.eye(n)])
    rhs = np.r_[b_ub, hi, -np.asarray(lo, float)]
    best = None
    for idx in itertools.combinations(range(len(M)), n):
        B = M[list(idx)]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        x = np.linalg.solve(B, rhs[list(idx)])
        if np.all(M @ x <= rhs + tol * (1 + np.abs(rhs))):
            val = float(c @ x)
            best = val if best is None else min(best, val)
    return best


def straight_line_residuals(inst, s):
    """Largest violation per constraint family, written out step by step with plain loops."""
    out = {}
    ns, ni, MT = inst.n_source, inst.n_inter, inst.MT

    def put(name, val):
        out[name] = max(out.get(name, 0.0), float(val))

    for t in range(MT):
        for e, arc in enumerate(inst.arcs):
            a, u = s.a[t, e], s.u[t, e]
            put("flow_bounds", max(0.0, u * arc.L - a, a - u * arc.U, -a))
        for i in range(inst.V):
            touching = [e for e, arc in enumerate(inst.arcs) if i in (arc.tail, arc.head)]
            used = sum(s.u[t, e] for e in touching)
            put("one_pipeline", max(0.0, used - 1))
        for i in range(ns + ni):
            outflow = sum(s.a[t, e] for e, arc in enumerate(inst.arcs) if arc.tail == i)
            inflow = sum(s.a[t, e] for e, arc in enumerate(inst.arcs) if arc.head == i)
            inmass = sum(s.a[t, e] * s.q[t, arc.tail] for e, arc in enumerate(inst.arcs) if arc.head == i)
            if i < ns:
                sa, sq = inst.SA[i, t], inst.SQ[i, t]
                put("source_balance", abs(s.p[t + 1, i] - (s.p[t, i] + sa - outflow)))
                put("source_quality", abs(s.p[t + 1, i] * s.q[t + 1, i]
                                          - (s.p[t, i] * s.q[t, i] + sa * sq - outflow * s.q[t, i])))
            else:
                put("tank_balance", abs(s.p[t + 1, i] - (s.p[t, i] + inflow - outflow)))
                put("tank_quality", abs(s.p[t + 1, i] * s.q[t + 1, i]
                                        - (s.p[t, i] * s.q[t, i] + inmass - outflow * s.q[t, i])))
        for k, i in enumerate(range(ns + ni, inst.V)):
            inmass = sum(s.a[t, e] * s.q[t, arc.tail] for e, arc in enumerate(inst.arcs) if arc.head == i)
            put("plant_quality", abs(s.q[t, i] - inmass / inst.RC[k, t]))
            put("shortage", max(0.0, inst.RQ[k, t] - s.q[t, i] - s.v[t, k], -s.v[t, k]))
    for t in range(MT + 1):
        for i in range(ns):
            put("source_nonneg", max(0.0, -s.p[t, i]))
        for i in range(ns, ns + ni):
            put("storage", max(0.0, inst.pmin[i] - s.p[t, i], s.p[t, i] - inst.pmax[i]))
    for i in range(ns):
        put("source_terminal", abs(s.p[MT, i]))
    return out


def ipm_lp_value(model, lb, ub):
    """Node LP of the recovery MILP solved by the in-package interior-point code.

    Used as the second route in the enumeration check, the first being the
    branch and bound over HiGHS node LPs.  Returns ``None`` on infeasibility.
    """
    import scipy.sparse as sp

    from poolrelax.conic.ipm import OPTIMAL, PRIMAL_INFEASIBLE, SolverConfig, solve
    from poolrelax.conic.program import make_program

    n = model.n
    fixed = np.flatnonzero(lb == ub)
    free = np.flatnonzero(lb != ub)
    hi = [j for j in free if np.isfinite(ub[j])]
    I = sp.identity(n, format="csr")
    G = sp.vstack([model.A_ub, -I[free], I[hi]]).tocsr()
    h = np.r_[model.b_ub, -lb[free], ub[hi]]
    A = sp.vstack([model.A_eq, I[fixed]]).tocsr()
    b = np.r_[model.b_eq, lb[fixed]]
    prog = make_program(model.c, A, b, G, h, G.shape[0])
    sol = solve(prog, SolverConfig(tol_gap=1e-11, tol_feas_primal=1e-10, tol_feas_dual=1e-10, max_iters=400))
    if sol.status == OPTIMAL:
        return sol.obj
    if sol.status == PRIMAL_INFEASIBLE:
        return None
    raise AssertionError(f"reference solver ended with {sol.status} on an enumeration node")


def monotone_matchings(plants, tanks, ok):
    """All plant-to-tank assignments that respect ``ok`` and keep tank positions increasing."""
    found = []
    for combo in itertools.permutations(range(len(tanks)), len(plants)):
        if any(b <= a for a, b in zip(combo, combo[1:])):
            continue
        if all(ok(tanks[r], i) for r, i in zip(combo, plants)):
            found.append([(tanks[r], i) for r, i in zip(combo, plants)])
    return found
