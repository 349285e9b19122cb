"""Symbolic-once, numeric-many sparse LDL^T for quasi-definite KKT systems."""

import numpy as np
import scipy.sparse as sp

from .. import _kernels


class LdlFactor:
    """LDL^T of a symmetric matrix with a fixed sparsity pattern.

    The pattern is given once as upper-triangle COO coordinates (duplicates
    allowed, they are summed).  Each call to :meth:`factor` takes the COO values
    in the same order, so the KKT assembly never rebuilds index structures.

    Parameters
    ----------
    n : int
        Matrix dimension.
    rows, cols : ndarray of int
        Upper-triangle coordinates (``rows <= cols``).
    signs : ndarray of float
        Expected pivot sign (+1 or -1) per original row; quasi-definite
        matrices have a sign pattern known in advance.
    kernels : module, optional
        Kernel implementation; defaults to the one chosen at import.
    """

    def __init__(self, n, rows, cols, signs, kernels=None, eps=1e-13, delta=1e-7):
        self.kern = kernels if kernels is not None else _kernels
        self.n = int(n)
        self.eps = eps
        self.delta = delta
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if np.any(rows > cols):
            raise ValueError("pattern must be upper triangular")
        n = self.n
        # ordering on the symmetric pattern
        off = rows != cols
        sym = sp.coo_matrix(
            (np.ones(2 * off.sum()), (np.r_[rows[off], cols[off]], np.r_[cols[off], rows[off]])),
            shape=(n, n),
        ).tocsr()
        sym.sum_duplicates()
        sym.sort_indices()
        perm = self.kern.min_degree(n, sym.indptr.astype(np.int64), sym.indices.astype(np.int64))
        iperm = np.empty(n, dtype=np.int64)
        iperm[perm] = np.arange(n)
        self.perm = perm
        self.iperm = iperm
        pr = iperm[rows]
        pc = iperm[cols]
        r = np.minimum(pr, pc)
        c = np.maximum(pr, pc)
        # CSC of the permuted upper triangle; map each COO entry to its slot
        key = c * n + r
        ukeys, inv = np.unique(key, return_inverse=True)
        self.coo_to_slot = inv.ravel()
        self.nnz = len(ukeys)
        self.Ai = (ukeys % n).astype(np.int64)
        colidx = ukeys // n
        self.Ap = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.Ap, colidx + 1, 1)
        self.Ap = np.cumsum(self.Ap).astype(np.int64)
        self._colidx = np.repeat(np.arange(n), np.diff(self.Ap))
        self._offd = self.Ai != self._colidx
        self.parent, self.lnz = self.kern.etree(n, self.Ap, self.Ai)
        self.signs = np.ascontiguousarray(np.asarray(signs, dtype=np.float64)[perm])
        nl = int(self.lnz.sum())
        self.Lp = np.zeros(n + 1, dtype=np.int64)
        self.Li = np.zeros(nl, dtype=np.int64)
        self.Lx = np.zeros(nl)
        self.D = np.zeros(n)
        self.Ax = np.zeros(self.nnz)
        self.n_reg = 0

    @property
    def fill(self):
        """Number of strictly-lower nonzeros in L."""
        return len(self.Li)

    def factor(self, values):
        """Numerically factor with COO ``values`` matching the pattern order."""
        self.Ax = np.bincount(self.coo_to_slot, weights=values, minlength=self.nnz)
        self.n_reg = int(
            self.kern.factor(
                self.n, self.Ap, self.Ai, self.Ax, self.parent, self.lnz, self.signs,
                self.eps, self.delta, self.Lp, self.Li, self.Lx, self.D,
            )
        )
        return self.n_reg

    def solve(self, b):
        """Solve ``K x = b`` with the current factorization."""
        x = np.ascontiguousarray(np.asarray(b, dtype=np.float64)[self.perm])
        self.kern.solve(self.n, self.Lp, self.Li, self.Lx, self.D, x)
        out = np.empty_like(x)
        out[self.perm] = x
        return out

    def matvec(self, x):
        """Multiply by the symmetric matrix held in ``Ax`` (original ordering)."""
        xp = x[self.perm]
        colidx, offd = self._colidx, self._offd
        y = np.bincount(self.Ai, weights=self.Ax * xp[colidx], minlength=self.n)
        y += np.bincount(colidx[offd], weights=self.Ax[offd] * xp[self.Ai[offd]], minlength=self.n)
        out = np.empty_like(y)
        out[self.perm] = y
        return out
