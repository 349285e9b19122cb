# distutils: language = c++
# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sparse LDL^T kernels.

Minimum-degree ordering, elimination tree, up-looking numeric factorization
with sign-directed dynamic regularization, and triangular solves.  The pure
Python twin lives in ``_ldl_py.py`` and must stay behaviourally identical.
"""

import numpy as np
cimport numpy as cnp
from libcpp.vector cimport vector
from libcpp.set cimport set as cset
from libcpp.pair cimport pair
from libc.math cimport sqrt
from cython.operator cimport dereference as deref

cnp.import_array()

ctypedef cnp.int64_t idx_t


def min_degree(Py_ssize_t n, const idx_t[::1] indptr, const idx_t[::1] indices,
               double dense_factor=10.0):
    """Return a fill-reducing permutation of a symmetric sparsity pattern.

    ``indptr``/``indices`` describe both triangles; diagonal entries are
    ignored.  Rows denser than ``max(16, dense_factor * sqrt(n))`` are
    ordered last.  Ties are broken by the smaller node id.
    """
    cdef vector[vector[idx_t]] adj
    cdef vector[char] alive
    cdef vector[idx_t] deg
    cdef cset[pair[idx_t, idx_t]] queue
    cdef vector[idx_t] nbrs
    cdef vector[idx_t] merged
    cdef vector[idx_t] dense_nodes
    cdef Py_ssize_t i, k, p, u, v, a, b, la, lb, pos = 0
    cdef idx_t w
    cdef double thr = dense_factor * sqrt(<double>n)
    cdef pair[idx_t, idx_t] top
    cdef cnp.ndarray[idx_t, ndim=1] perm = np.empty(n, dtype=np.int64)

    if thr < 16.0:
        thr = 16.0
    adj.resize(n)
    alive.assign(n, 1)
    deg.assign(n, 0)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] != i:
                adj[i].push_back(indices[p])
    for i in range(n):
        if <double>adj[i].size() > thr:
            alive[i] = 0
            dense_nodes.push_back(i)
    for i in range(n):
        if not alive[i]:
            continue
        merged.clear()
        for k in range(<Py_ssize_t>adj[i].size()):
            w = adj[i][k]
            if alive[w]:
                merged.push_back(w)
        # sort + unique
        _sort_unique(merged)
        adj[i].swap(merged)
        deg[i] = adj[i].size()
        queue.insert(pair[idx_t, idx_t](deg[i], i))

    while not queue.empty():
        top = deref_begin(queue)
        queue.erase(queue.begin())
        v = top.second
        alive[v] = 0
        perm[pos] = v
        pos += 1
        nbrs.clear()
        for k in range(<Py_ssize_t>adj[v].size()):
            w = adj[v][k]
            if alive[w]:
                nbrs.push_back(w)
        for k in range(<Py_ssize_t>nbrs.size()):
            u = nbrs[k]
            merged.clear()
            la = adj[u].size()
            lb = nbrs.size()
            a = 0
            b = 0
            while a < la or b < lb:
                if b >= lb or (a < la and adj[u][a] < nbrs[b]):
                    w = adj[u][a]
                    a += 1
                elif a >= la or nbrs[b] < adj[u][a]:
                    w = nbrs[b]
                    b += 1
                else:
                    w = nbrs[b]
                    a += 1
                    b += 1
                if w != u and alive[w]:
                    merged.push_back(w)
            adj[u].swap(merged)
            queue.erase(pair[idx_t, idx_t](deg[u], u))
            deg[u] = adj[u].size()
            queue.insert(pair[idx_t, idx_t](deg[u], u))
        adj[v].clear()

    # dense rows last, lightest first
    order = sorted([(adj[dense_nodes[k]].size(), dense_nodes[k]) for k in range(<Py_ssize_t>dense_nodes.size())])
    for _, node in order:
        perm[pos] = node
        pos += 1
    return perm


cdef inline pair[idx_t, idx_t] deref_begin(cset[pair[idx_t, idx_t]]& s):
    return deref(s.begin())


cdef void _sort_unique(vector[idx_t]& vec):
    cdef Py_ssize_t m = vec.size(), i, j
    if m < 2:
        return
    _introsort(vec, 0, m - 1)
    j = 0
    for i in range(1, m):
        if vec[i] != vec[j]:
            j += 1
            vec[j] = vec[i]
    vec.resize(j + 1)


cdef void _introsort(vector[idx_t]& a, Py_ssize_t lo, Py_ssize_t hi):
    # plain quicksort with insertion sort for short runs; lists are small
    cdef Py_ssize_t i, j
    cdef idx_t pivot, tmp
    while hi - lo > 16:
        pivot = a[(lo + hi) // 2]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                tmp = a[i]
                a[i] = a[j]
                a[j] = tmp
                i += 1
                j -= 1
        if j - lo < hi - i:
            _introsort(a, lo, j)
            lo = i
        else:
            _introsort(a, i, hi)
            hi = j
    for i in range(lo + 1, hi + 1):
        tmp = a[i]
        j = i - 1
        while j >= lo and a[j] > tmp:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = tmp


def etree(Py_ssize_t n, const idx_t[::1] Ap, const idx_t[::1] Ai):
    """Elimination tree and column counts of L for an upper-triangular CSC matrix."""
    cdef cnp.ndarray[idx_t, ndim=1] parent = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[idx_t, ndim=1] lnz = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[idx_t, ndim=1] work = np.zeros(n, dtype=np.int64)
    cdef Py_ssize_t j, p, i
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


def factor(Py_ssize_t n, const idx_t[::1] Ap, const idx_t[::1] Ai, const double[::1] Ax,
           const idx_t[::1] parent, const idx_t[::1] lnz, const double[::1] signs,
           double eps, double delta, idx_t[::1] Lp, idx_t[::1] Li, double[::1] Lx,
           double[::1] D):
    """Numeric LDL^T of an upper-triangular CSC matrix into preallocated storage.

    A pivot whose sign disagrees with ``signs`` (or whose magnitude is below
    ``eps``) is replaced by ``signs[k] * delta``.  Returns the number of such
    replacements.
    """
    cdef cnp.ndarray[idx_t, ndim=1] next_space = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[idx_t, ndim=1] y_idx = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[idx_t, ndim=1] elim = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[char, ndim=1] marked = np.zeros(n, dtype=np.int8)
    cdef cnp.ndarray[double, ndim=1] y_vals = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t k, p, i, j, nnz_y, nnz_e, bidx, nxt, cidx, tmp
    cdef double yv, lval
    cdef idx_t n_reg = 0

    Lp[0] = 0
    for i in range(n):
        Lp[i + 1] = Lp[i] + lnz[i]
        next_space[i] = Lp[i]
    for k in range(n):
        D[k] = 0.0
        nnz_y = 0
        for p in range(Ap[k], Ap[k + 1]):
            bidx = Ai[p]
            if bidx == k:
                D[k] += Ax[p]
                continue
            y_vals[bidx] += Ax[p]
            if not marked[bidx]:
                marked[bidx] = 1
                elim[0] = bidx
                nnz_e = 1
                nxt = parent[bidx]
                while nxt != -1 and nxt < k:
                    if marked[nxt]:
                        break
                    marked[nxt] = 1
                    elim[nnz_e] = nxt
                    nnz_e += 1
                    nxt = parent[nxt]
                while nnz_e > 0:
                    nnz_e -= 1
                    y_idx[nnz_y] = elim[nnz_e]
                    nnz_y += 1
        for i in range(nnz_y - 1, -1, -1):
            cidx = y_idx[i]
            tmp = next_space[cidx]
            yv = y_vals[cidx]
            for j in range(Lp[cidx], tmp):
                y_vals[Li[j]] -= Lx[j] * yv
            lval = yv / D[cidx]
            Li[tmp] = k
            Lx[tmp] = lval
            D[k] -= yv * lval
            next_space[cidx] = tmp + 1
            y_vals[cidx] = 0.0
            marked[cidx] = 0
        if D[k] * signs[k] <= eps:
            D[k] = signs[k] * delta
            n_reg += 1
    return n_reg


def solve(Py_ssize_t n, const idx_t[::1] Lp, const idx_t[::1] Li, const double[::1] Lx,
          const double[::1] D, double[::1] x):
    """In-place solve of L D L^T x = b (``x`` holds b on entry)."""
    cdef Py_ssize_t i, j
    cdef double xi
    for i in range(n):
        xi = x[i]
        for j in range(Lp[i], Lp[i + 1]):
            x[Li[j]] -= Lx[j] * xi
    for i in range(n):
        x[i] /= D[i]
    for i in range(n - 1, -1, -1):
        xi = x[i]
        for j in range(Lp[i], Lp[i + 1]):
            xi -= Lx[j] * x[Li[j]]
        x[i] = xi
