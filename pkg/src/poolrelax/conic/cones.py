"""Vectorized Jordan-algebra operations on a product of R_+^l and second-order cones."""

import numpy as np


class ConeSpace:
    """Index bookkeeping and algebra for ``R_+^l x SOC(q1) x ... x SOC(qk)``."""

    def __init__(self, l, q):
        self.l = int(l)
        self.q = np.asarray(list(q), dtype=np.int64)
        self.nq = len(self.q)
        self.m = self.l + int(self.q.sum())
        starts = self.l + np.concatenate([[0], np.cumsum(self.q)[:-1]]).astype(np.int64)[: self.nq]
        self.head = starts
        seg = np.repeat(np.arange(self.nq), self.q)
        local = np.arange(self.m - self.l) - np.repeat(starts - self.l, self.q)
        is_tail = local > 0
        self.tail = self.l + np.flatnonzero(is_tail)
        self.tail_seg = seg[is_tail]
        self.degree = self.l + self.nq
        self.e = np.zeros(self.m)
        self.e[: self.l] = 1.0
        self.e[self.head] = 1.0

    # --- per-cone reductions -------------------------------------------
    def _tail_dot(self, u, v):
        return np.bincount(self.tail_seg, weights=u[self.tail] * v[self.tail], minlength=self.nq)

    def jdot(self, u, v):
        """Per-cone ``u0 v0 - u1.v1``."""
        return u[self.head] * v[self.head] - self._tail_dot(u, v)

    def circ(self, u, v):
        """Jordan product."""
        out = np.empty(self.m)
        l = self.l
        out[:l] = u[:l] * v[:l]
        if self.nq:
            h, t, sg = self.head, self.tail, self.tail_seg
            out[h] = u[h] * v[h] + self._tail_dot(u, v)
            out[t] = u[h][sg] * v[t] + v[h][sg] * u[t]
        return out

    def inv_circ(self, lam, v):
        """Solve ``lam o x = v`` for ``x``."""
        out = np.empty(self.m)
        l = self.l
        out[:l] = v[:l] / lam[:l]
        if self.nq:
            h, t, sg = self.head, self.tail, self.tail_seg
            det = self.jdot(lam, lam)
            x0 = (lam[h] * v[h] - self._tail_dot(lam, v)) / det
            out[h] = x0
            out[t] = (v[t] - x0[sg] * lam[t]) / lam[h][sg]
        return out

    def interior_margin(self, u):
        """Minimum over blocks of ``u_i`` (orthant) and ``u0 - ||u1||`` (SOC)."""
        vals = []
        if self.l:
            vals.append(u[: self.l].min())
        if self.nq:
            nrm = np.sqrt(self._tail_dot(u, u))
            vals.append((u[self.head] - nrm).min())
        return min(vals) if vals else np.inf

    def shift_into(self, u):
        """Shift ``u`` along ``e`` so it lies strictly inside the cone."""
        margin = self.interior_margin(u)
        if margin < 0:
            return u + (1.0 - margin) * self.e
        if margin == 0:
            return u + self.e
        return u.copy()

    # --- Nesterov-Todd scaling ------------------------------------------
    def nt_scaling(self, s, z):
        """Return the NT scaling ``(w_lin, eta, wbar)`` and ``lam = W z``."""
        l = self.l
        w_lin = np.sqrt(s[:l] / z[:l])
        eta = wbar = None
        if self.nq:
            h, t, sg = self.head, self.tail, self.tail_seg
            s_res = np.maximum(self.jdot(s, s), 1e-300)
            z_res = np.maximum(self.jdot(z, z), 1e-300)
            s_n = np.sqrt(s_res)
            z_n = np.sqrt(z_res)
            sb = s[l:] / np.repeat(s_n, self.q)
            zb = z[l:] / np.repeat(z_n, self.q)
            full_dot = np.bincount(np.repeat(np.arange(self.nq), self.q), weights=sb * zb, minlength=self.nq)
            gamma = np.sqrt(np.maximum((1.0 + full_dot) / 2.0, 1e-300))
            jz = zb.copy()
            jz[t - l] *= -1.0
            wbar = (sb + jz) / np.repeat(2.0 * gamma, self.q)
            eta = (s_res / z_res) ** 0.25
            # renormalize so that wbar^T J wbar = 1 exactly
            wfull = np.zeros(self.m)
            wfull[l:] = wbar
            wj = self.jdot(wfull, wfull)
            wbar = wbar / np.repeat(np.sqrt(np.maximum(wj, 1e-300)), self.q)
        scal = (w_lin, eta, wbar)
        lam = self.apply_W(scal, z)
        return scal, lam

    def apply_W(self, scal, v, inverse=False):
        """Multiply by the (symmetric) NT scaling matrix or its inverse."""
        w_lin, eta, wbar = scal
        l = self.l
        out = np.empty(self.m)
        out[:l] = v[:l] / w_lin if inverse else v[:l] * w_lin
        if self.nq:
            h, t, sg = self.head, self.tail, self.tail_seg
            w0 = wbar[h - l]
            w1 = wbar[t - l]
            v0 = v[h]
            v1 = v[t]
            w1v1 = np.bincount(sg, weights=w1 * v1, minlength=self.nq)
            sgn = -1.0 if inverse else 1.0
            scale = 1.0 / eta if inverse else eta
            out[h] = scale * (w0 * v0 + sgn * w1v1)
            coef = sgn * v0 + w1v1 / (1.0 + w0)
            out[t] = scale[sg] * (v1 + coef[sg] * w1)
        return out

    def max_step(self, lam, d):
        """Largest ``a`` with ``lam + a d`` in the cone (``lam`` interior)."""
        amax = np.inf
        l = self.l
        if l:
            neg = d[:l] < 0
            if neg.any():
                amax = min(amax, float(np.min(-lam[:l][neg] / d[:l][neg])))
        if self.nq:
            h, t, sg = self.head, self.tail, self.tail_seg
            lam_j = np.sqrt(np.maximum(self.jdot(lam, lam), 1e-300))
            lb = np.empty(self.m)
            lb[h] = lam[h] / lam_j
            lb[t] = lam[t] / lam_j[sg]
            rho0 = self.jdot(lb, d) / lam_j
            rho1 = (d[t] - ((rho0 * lam_j + d[h]) / (lb[h] + 1.0))[sg] * lb[t]) / lam_j[sg]
            nrm = np.sqrt(np.bincount(sg, weights=rho1 * rho1, minlength=self.nq))
            worst = np.max(nrm - rho0)
            if worst > 0:
                amax = min(amax, 1.0 / worst)
        return amax
