"""Reference primal-dual interior-point solver for LP/SOCP cone programs.

Homogeneous self-dual embedding, Nesterov-Todd scaling, Mehrotra
predictor-corrector steps, and a quasi-definite KKT system factored with the
package's sparse LDL^T kernels (static plus dynamic regularization, iterative
refinement).
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cones import ConeSpace
from .kkt import LdlFactor
from .program import ProgramError

OPTIMAL = "Optimal"
PRIMAL_INFEASIBLE = "PrimalInfeasible"
DUAL_INFEASIBLE = "DualInfeasible"
ITER_LIMIT = "IterLimit"
NEAR_OPTIMAL = "NearOptimal"


@dataclass(frozen=True)
class SolverConfig:
    """Interior-point settings.

    ``step_fraction`` is the fraction of the distance to the cone boundary
    taken each iteration; ``ruiz_passes`` controls equilibration.  A run that
    stops early with some iterate inside ``tol_reduced`` on all three
    measures ends ``NearOptimal`` and returns the latest such iterate, since
    later iterates sit further along the central path; otherwise it returns
    the iterate with the smallest worst measure.
    """

    tol_gap: float = 1e-8
    tol_feas_primal: float = 1e-8
    tol_feas_dual: float = 1e-8
    tol_infeas: float = 1e-7
    tol_reduced: float = 1e-6
    max_iters: int = 200
    step_fraction: float = 0.99
    static_reg: float = 1e-9
    dynamic_eps: float = 1e-13
    dynamic_delta: float = 1e-7
    refine_passes: int = 3
    refine_tol: float = 1e-8
    ruiz_passes: int = 15
    verbose: bool = False

    def __post_init__(self):
        if min(self.tol_gap, self.tol_feas_primal, self.tol_feas_dual) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")


@dataclass
class Solution:
    """Result of a cone-program solve, in the original (unscaled) space."""

    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    obj: float
    dual_obj: float
    iters: int
    pres: float
    dres: float
    gap: float
    solve_time: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == OPTIMAL

    @property
    def usable(self):
        """Optimal, or stopped early with a best iterate inside ``tol_reduced``."""
        return self.status in (OPTIMAL, NEAR_OPTIMAL)


def _ruiz(prog, cones, passes):
    """Ruiz equilibration of ``[A; G]``; SOC rows share one factor per cone."""
    n = prog.n
    M = sp.vstack([prog.A, prog.G]).tocsc().astype(float)
    D = np.ones(n)
    E = np.ones(prog.p + prog.m)
    if M.nnz == 0:
        return D, E
    seg_rows = np.arange(prog.p + prog.m)
    # rows of a SOC block are grouped under the head's row id
    off = prog.p + cones.l
    for k, size in enumerate(cones.q):
        seg_rows[off:off + size] = off
        off += size
    absM = abs(M)
    for _ in range(passes):
        cur = sp.diags(E) @ absM @ sp.diags(D)
        cmax = cur.max(axis=0).toarray().ravel()
        rmax = cur.max(axis=1).toarray().ravel()
        grp = np.zeros(prog.p + prog.m)
        np.maximum.at(grp, seg_rows, rmax)
        rmax = grp[seg_rows]
        cmax[cmax == 0] = 1.0
        rmax[rmax == 0] = 1.0
        D /= np.sqrt(cmax)
        E /= np.sqrt(rmax)
        if max(abs(1 - cmax).max(), abs(1 - rmax).max()) < 1e-3:
            break
    return D, E


class InteriorPointSolver:
    """Reusable solver object; :func:`solve` is the functional entry point."""

    def __init__(self, config=None, kernels=None):
        self.cfg = config or SolverConfig()
        self.kernels = kernels

    def solve(self, prog):
        # a blow-up near the end shows as inf/nan, which the loop checks for explicitly
        with np.errstate(over="ignore", invalid="ignore"):
            return self._solve(prog)

    def _solve(self, prog):
        cfg = self.cfg
        t0 = time.perf_counter()
        cones = ConeSpace(prog.n_nonneg, prog.soc_dims)
        n, p, m = prog.n, prog.p, prog.m
        if n == 0:
            raise ProgramError("empty program")

        D, E = _ruiz(prog, cones, cfg.ruiz_passes) if cfg.ruiz_passes else (np.ones(n), np.ones(p + m))
        EA, EG = E[:p], E[p:]
        A = (sp.diags(EA) @ prog.A @ sp.diags(D)).tocsr()
        G = (sp.diags(EG) @ prog.G @ sp.diags(D)).tocsr()
        c = D * prog.c
        b = EA * prog.b
        h = EG * prog.h
        AT = A.T.tocsr()
        GT = G.T.tocsr()

        # original data for residual checks
        A0, G0, c0, b0, h0 = prog.A, prog.G, prog.c, prog.b, prog.h
        nb = 1 + np.abs(b0).max(initial=0.0)
        nh = 1 + np.abs(h0).max(initial=0.0)
        nc = 1 + np.abs(c0).max(initial=0.0)

        kkt = _KktSystem(n, p, cones, A, G, cfg, self.kernels)

        # initial point: two least-squares style solves with W = I
        kkt.set_scaling(None)
        sol = kkt.solve(np.r_[np.zeros(n), b, h])
        x = sol[:n]
        s = cones.shift_into(-sol[n + p:])
        sol = kkt.solve(np.r_[-c, np.zeros(p), np.zeros(m)])
        y = sol[n:n + p]
        z = cones.shift_into(sol[n + p:])
        tau = 1.0
        kappa = 1.0

        status = ITER_LIMIT
        history = []
        reason = "iteration limit"
        it = 0
        pres = dres = gap = np.inf
        pobj = dobj = np.nan
        best = None
        latest_ok = None
        for it in range(cfg.max_iters + 1):
            # ---- residuals and termination (original space) --------------
            xo = D * x / tau
            yo = EA * y / tau
            zo = EG * z / tau
            so = s / EG / tau
            pres = max(
                np.abs(A0 @ xo - b0).max(initial=0.0) / nb,
                np.abs(G0 @ xo + so - h0).max(initial=0.0) / nh,
            )
            dres = np.abs(A0.T @ yo + G0.T @ zo + c0).max(initial=0.0) / nc
            pobj = float(c0 @ xo)
            dobj = float(-(b0 @ yo) - h0 @ zo)
            gap = abs(pobj - dobj)
            rel_gap = gap / (1 + abs(pobj))
            history.append((it, pobj, dobj, pres, dres, tau, kappa))
            if cfg.verbose:
                print(f"{it:3d} pobj {pobj: .9e} dobj {dobj: .9e} pres {pres:.1e} dres {dres:.1e} "
                      f"gap {rel_gap:.1e} tau {tau:.1e} kap {kappa:.1e}")
            score = max(pres, dres, rel_gap)
            if best is None or score < best[0]:
                best = (score, xo.copy(), yo.copy(), zo.copy(), so.copy(), pobj, dobj, pres, dres, gap)
            if score <= cfg.tol_reduced:
                latest_ok = (score, xo.copy(), yo.copy(), zo.copy(), so.copy(), pobj, dobj, pres, dres, gap)
            if pres <= cfg.tol_feas_primal and dres <= cfg.tol_feas_dual and rel_gap <= cfg.tol_gap:
                status = OPTIMAL
                reason = "converged"
                break
            # infeasibility certificates (ray, not divided by tau)
            bty_htz = float(b0 @ (EA * y) + h0 @ (EG * z))
            if bty_htz < 0:
                r = np.abs(A0.T @ (EA * y) + G0.T @ (EG * z)).max(initial=0.0) / -bty_htz
                if r <= cfg.tol_infeas:
                    status = PRIMAL_INFEASIBLE
                    reason = "primal infeasibility certificate"
                    break
            ctx = float(c0 @ (D * x))
            if ctx < 0:
                r = max(np.abs(A0 @ (D * x)).max(initial=0.0),
                        np.abs(G0 @ (D * x) + s / EG).max(initial=0.0)) / -ctx
                if r <= cfg.tol_infeas:
                    status = DUAL_INFEASIBLE
                    reason = "dual infeasibility certificate"
                    break
            if it == cfg.max_iters:
                break

            # ---- Newton step -------------------------------------------------
            r_x = AT @ y + GT @ z + c * tau
            r_y = -(A @ x) + b * tau
            r_z = -(G @ x) + h * tau - s
            r_tau = -(c @ x) - b @ y - h @ z - kappa
            mu = (s @ z + tau * kappa) / (cones.degree + 1)

            scal, lam = cones.nt_scaling(s, z)
            try:
                kkt.set_scaling(scal)
                sol2 = kkt.solve(np.r_[-c, b, h])
            except (FloatingPointError, ValueError) as exc:
                reason = f"factorization failure: {exc}"
                break
            if not np.all(np.isfinite(sol2)):
                reason = "non-finite KKT solution"
                break
            g2 = c @ sol2[:n] + b @ sol2[n:n + p] + h @ sol2[n + p:]

            def direction(eta, d_s, d_kappa):
                rhs = np.r_[-eta * r_x, eta * r_y, eta * r_z + cones.apply_W(scal, cones.inv_circ(lam, d_s))]
                sol1 = kkt.solve(rhs)
                g1 = c @ sol1[:n] + b @ sol1[n:n + p] + h @ sol1[n + p:]
                dtau = (-eta * r_tau + g1 - d_kappa / tau) / (kappa / tau - g2)
                d = sol1 + dtau * sol2
                dx, dy, dz = d[:n], d[n:n + p], d[n + p:]
                dz_t = cones.apply_W(scal, dz)
                ds_t = -cones.inv_circ(lam, d_s) - dz_t
                dkappa = -(d_kappa + kappa * dtau) / tau
                return dx, dy, dz, dz_t, ds_t, dtau, dkappa

            def step_len(ds_t, dz_t, dtau, dkappa):
                a = min(cones.max_step(lam, ds_t), cones.max_step(lam, dz_t))
                if dtau < 0:
                    a = min(a, -tau / dtau)
                if dkappa < 0:
                    a = min(a, -kappa / dkappa)
                return a

            lamlam = cones.circ(lam, lam)
            _, _, _, dz_a, ds_a, dtau_a, dkappa_a = direction(1.0, lamlam, kappa * tau)
            alpha_aff = min(1.0, step_len(ds_a, dz_a, dtau_a, dkappa_a))
            sigma = min(1.0, max(0.0, (1.0 - alpha_aff) ** 3))
            d_s = lamlam + cones.circ(ds_a, dz_a) - sigma * mu * cones.e
            d_kappa = kappa * tau + dkappa_a * dtau_a - sigma * mu
            dx, dy, dz, dz_t, ds_t, dtau, dkappa = direction(1.0 - sigma, d_s, d_kappa)
            alpha = min(1.0, cfg.step_fraction * step_len(ds_t, dz_t, dtau, dkappa))
            if not np.isfinite(alpha) or alpha < 1e-12:
                reason = "step length collapsed"
                break
            x = x + alpha * dx
            y = y + alpha * dy
            z = cones.apply_W(scal, lam + alpha * dz_t, inverse=True)
            s = cones.apply_W(scal, lam + alpha * ds_t)
            tau = tau + alpha * dtau
            kappa = kappa + alpha * dkappa

        info = {"reason": reason, "history": history, "n_reg": kkt.factor.n_reg if kkt.factor else 0,
                "kkt_dim": kkt.dim, "kkt_fill": kkt.factor.fill if kkt.factor else 0}
        if status in (PRIMAL_INFEASIBLE, DUAL_INFEASIBLE):
            xo, yo, zo, so = D * x, EA * y, EG * z, s / EG
        elif status == ITER_LIMIT and latest_ok is not None:
            score, xo, yo, zo, so, pobj, dobj, pres, dres, gap = latest_ok
            status = NEAR_OPTIMAL
        elif status == ITER_LIMIT and best is not None:
            score, xo, yo, zo, so, pobj, dobj, pres, dres, gap = best
        return Solution(
            status=status, x=xo, y=yo, z=zo, s=so,
            obj=pobj + prog.offset, dual_obj=dobj + prog.offset,
            iters=it, pres=float(pres), dres=float(dres), gap=float(gap),
            solve_time=time.perf_counter() - t0, info=info,
        )


class _KktSystem:
    """Assembles ``[[dI, A', G'], [A, -dI, 0], [G, 0, -W'W]]`` with a fixed pattern."""

    def __init__(self, n, p, cones, A, G, cfg, kernels):
        self.n, self.p, self.cones, self.cfg = n, p, cones, cfg
        m = cones.m
        self.dim = n + p + m
        reg = cfg.static_reg
        Ac = A.tocoo()
        Gc = G.tocoo()
        rows = [np.arange(n), Ac.col, Gc.col, n + np.arange(p)]
        cols = [np.arange(n), n + Ac.row, n + p + Gc.row, n + np.arange(p)]
        vals = [np.full(n, reg), Ac.data, Gc.data, np.full(p, -reg)]
        self.fixed_vals = np.concatenate(vals)
        zoff = n + p
        # scaling block: orthant diagonal then dense upper triangles of SOC blocks
        l = cones.l
        br, bc, bcone, bjay = [np.arange(l)], [np.arange(l)], [np.full(l, -1)], [np.zeros(l)]
        for k, (start, size) in enumerate(zip(cones.head, cones.q)):
            ii, jj = np.triu_indices(size)
            br.append(start + ii)
            bc.append(start + jj)
            bcone.append(np.full(len(ii), k))
            jay = np.where((ii == jj) & (ii == 0), 1.0, np.where(ii == jj, -1.0, 0.0))
            bjay.append(jay)
        self.blk_r = np.concatenate(br).astype(np.int64)
        self.blk_c = np.concatenate(bc).astype(np.int64)
        self.blk_cone = np.concatenate(bcone).astype(np.int64)
        self.blk_J = np.concatenate(bjay)
        rows.append(zoff + self.blk_r)
        cols.append(zoff + self.blk_c)
        self.rows = np.concatenate(rows).astype(np.int64)
        self.cols = np.concatenate(cols).astype(np.int64)
        self.n_fixed = len(self.fixed_vals)
        signs = np.r_[np.ones(n), -np.ones(p + m)]
        self.factor = LdlFactor(self.dim, self.rows, self.cols, signs, kernels=kernels,
                                eps=cfg.dynamic_eps, delta=cfg.dynamic_delta)
        self.reg_vec = np.r_[np.full(n, reg), np.full(p, -reg), np.zeros(m)]

    def set_scaling(self, scal):
        """Refactor with scaling ``scal`` (``None`` means identity)."""
        cones = self.cones
        l = cones.l
        blk = np.empty(len(self.blk_r))
        if scal is None:
            blk[:l] = -1.0
            blk[l:] = -np.where(self.blk_r[l:] == self.blk_c[l:], 1.0, 0.0)
        else:
            w_lin, eta, wbar = scal
            blk[:l] = -(w_lin ** 2)
            if cones.nq:
                k = self.blk_cone[l:]
                wi = wbar[self.blk_r[l:] - l]
                wj = wbar[self.blk_c[l:] - l]
                blk[l:] = -(eta[k] ** 2) * (2.0 * wi * wj - self.blk_J[l:])
        vals = np.concatenate([self.fixed_vals, blk])
        with np.errstate(all="raise"):
            self.factor.factor(vals)

    def solve(self, rhs):
        f = self.factor
        sol = f.solve(rhs)
        scale = np.abs(rhs).max(initial=0.0)
        for _ in range(self.cfg.refine_passes):
            res = rhs - (f.matvec(sol) - self.reg_vec * sol)
            if np.abs(res).max(initial=0.0) <= self.cfg.refine_tol * scale:
                break
            sol = sol + f.solve(res)
        return sol


def solve(prog, config=None, kernels=None):
    """Solve a :class:`~poolrelax.conic.program.ConicProgram` with the reference IPM."""
    return InteriorPointSolver(config, kernels).solve(prog)
