"""Pure-Python twin of the compiled LDL^T kernels.

Same algorithms and tie-breaking as ``_ldl.pyx``; used when the extension
is not built, and as the reference side of the parity tests.
"""

import heapq
import math

import numpy as np


def min_degree(n, indptr, indices, dense_factor=10.0):
    """Return a fill-reducing permutation of a symmetric sparsity pattern."""
    thr = max(16.0, dense_factor * math.sqrt(n))
    adj = [set(int(j) for j in indices[indptr[i]:indptr[i + 1]] if j != i) for i in range(n)]
    alive = [True] * n
    dense = []
    for i in range(n):
        if len(adj[i]) > thr:
            alive[i] = False
            dense.append(i)
    deg = [0] * n
    heap = []
    for i in range(n):
        if not alive[i]:
            continue
        adj[i] = {j for j in adj[i] if alive[j]}
        deg[i] = len(adj[i])
        heap.append((deg[i], i))
    heapq.heapify(heap)
    perm = []
    while heap:
        d, v = heapq.heappop(heap)
        if not alive[v] or d != deg[v]:
            continue  # stale entry
        alive[v] = False
        perm.append(v)
        nbrs = [w for w in adj[v] if alive[w]]
        nset = set(nbrs)
        for u in nbrs:
            merged = {w for w in (adj[u] | nset) if w != u and alive[w]}
            adj[u] = merged
            deg[u] = len(merged)
            heapq.heappush(heap, (deg[u], u))
        adj[v] = set()
    dense_sizes = sorted((len(adj[i]), i) for i in dense)
    perm.extend(i for _, i in dense_sizes)
    return np.asarray(perm, dtype=np.int64)


def etree(n, Ap, Ai):
    """Elimination tree and column counts of L for an upper-triangular CSC matrix."""
    parent = np.full(n, -1, dtype=np.int64)
    lnz = np.zeros(n, dtype=np.int64)
    work = np.zeros(n, dtype=np.int64)
    for j in range(n):
        work[j] = j
        for p in range(Ap[j], Ap[j + 1]):
            i = Ai[p]
            if i > j:
                raise ValueError("matrix is not upper triangular")
            while work[i] != j:
                if parent[i] == -1:
                    parent[i] = j
                lnz[i] += 1
                work[i] = j
                i = parent[i]
    return parent, lnz


def factor(n, Ap, Ai, Ax, parent, lnz, signs, eps, delta, Lp, Li, Lx, D):
    """Numeric LDL^T into preallocated storage; returns the regularized pivot count."""
    next_space = np.empty(n, dtype=np.int64)
    marked = np.zeros(n, dtype=bool)
    y_vals = np.zeros(n)
    n_reg = 0
    Lp[0] = 0
    Lp[1:] = np.cumsum(lnz)
    next_space[:] = Lp[:-1]
    for k in range(n):
        dk = 0.0
        y_idx = []
        for p in range(Ap[k], Ap[k + 1]):
            b = Ai[p]
            if b == k:
                dk += Ax[p]
                continue
            y_vals[b] += Ax[p]
            if not marked[b]:
                marked[b] = True
                chain = [b]
                nxt = parent[b]
                while nxt != -1 and nxt < k and not marked[nxt]:
                    marked[nxt] = True
                    chain.append(nxt)
                    nxt = parent[nxt]
                y_idx.extend(reversed(chain))
        for c in reversed(y_idx):
            tmp = next_space[c]
            yv = y_vals[c]
            for j in range(Lp[c], tmp):
                y_vals[Li[j]] -= Lx[j] * yv
            lval = yv / D[c]
            Li[tmp] = k
            Lx[tmp] = lval
            dk -= yv * lval
            next_space[c] = tmp + 1
            y_vals[c] = 0.0
            marked[c] = False
        if dk * signs[k] <= eps:
            dk = signs[k] * delta
            n_reg += 1
        D[k] = dk
    return n_reg


def solve(n, Lp, Li, Lx, D, x):
    """In-place solve of L D L^T x = b (``x`` holds b on entry)."""
    for i in range(n):
        xi = x[i]
        if xi != 0.0:
            for j in range(Lp[i], Lp[i + 1]):
                x[Li[j]] -= Lx[j] * xi
    x /= D
    for i in range(n - 1, -1, -1):
        xi = x[i]
        for j in range(Lp[i], Lp[i + 1]):
            xi -= Lx[j] * x[Li[j]]
        x[i] = xi
