# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; semantics follow ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, int8_t
from libc.math cimport ceil, fabs

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _sm(uint64_t x) noexcept nogil:
    x = x + GOLDEN
    x = (x ^ (x >> 30)) * M1
    x = (x ^ (x >> 27)) * M2
    return x ^ (x >> 31)


cdef inline uint64_t _mix(uint64_t key, uint64_t a) noexcept nogil:
    return _sm(key ^ _sm(a))


cdef inline double _unif(uint64_t key, uint64_t a, uint64_t b) noexcept nogil:
    return <double>(_mix(_mix(key, a), b) >> 11) * INV53


def mix(key, a):
    return int(_mix(<uint64_t>(int(key) & 0xFFFFFFFFFFFFFFFF), <uint64_t>(int(a) & 0xFFFFFFFFFFFFFFFF)))


def keyed_uniform(key, a, b):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] aa = np.ascontiguousarray(np.asarray(a).astype(np.uint64).ravel())
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] bb = np.ascontiguousarray(np.asarray(b).astype(np.uint64).ravel())
    cdef Py_ssize_t n = aa.shape[0], i
    cdef uint64_t k = <uint64_t>(int(key) & 0xFFFFFFFFFFFFFFFF)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _unif(k, aa[i], bb[i])
    return out.reshape(np.shape(a))


def greedy_accept(order, indptr, indices):
    cdef int64_t[::1] od = np.ascontiguousarray(order, dtype=np.int64)
    cdef int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef Py_ssize_t n = od.shape[0], i, p, v
    acc = np.zeros(n, dtype=np.int8)
    cdef int8_t[::1] a = acc
    cdef int8_t ok
    with nogil:
        for i in range(n):
            v = od[i]
            ok = 1
            for p in range(ip[v], ip[v + 1]):
                if a[ix[p]]:
                    ok = 0
                    break
            a[v] = ok
    return acc


def ek_rounds(pred_indptr, pred_indices, int kmax):
    cdef int64_t[::1] ip = np.ascontiguousarray(pred_indptr, dtype=np.int64)
    cdef int64_t[::1] ix = np.ascontiguousarray(pred_indices, dtype=np.int64)
    cdef Py_ssize_t n = ip.shape[0] - 1, v, p
    cdef int k
    out = np.zeros((kmax + 1, n), dtype=np.int8)
    cdef int8_t[:, ::1] e = out
    cdef int8_t ok
    with nogil:
        for v in range(n):
            e[0, v] = 1
        for k in range(1, kmax + 1):
            for v in range(n):
                ok = 1
                for p in range(ip[v], ip[v + 1]):
                    if e[k - 1, ix[p]]:
                        ok = 0
                        break
                e[k, v] = ok
    return out


def einf_dfs(pred_indptr, pred_indices):
    cdef int64_t[::1] ip = np.ascontiguousarray(pred_indptr, dtype=np.int64)
    cdef int64_t[::1] ix = np.ascontiguousarray(pred_indices, dtype=np.int64)
    cdef Py_ssize_t n = ip.shape[0] - 1, root, v, p, u, top
    val_arr = np.full(n, -1, dtype=np.int8)
    cdef int8_t[::1] val = val_arr
    stack_arr = np.empty(max(1, ix.shape[0] + n), dtype=np.int64)
    cdef int64_t[::1] stack = stack_arr
    cdef bint pending
    cdef int8_t res
    with nogil:
        for root in range(n):
            if val[root] >= 0:
                continue
            top = 0
            stack[0] = root
            while top >= 0:
                v = stack[top]
                if val[v] >= 0:
                    top -= 1
                    continue
                pending = False
                res = 1
                for p in range(ip[v], ip[v + 1]):
                    u = ix[p]
                    if val[u] < 0:
                        top += 1
                        stack[top] = u
                        pending = True
                    elif val[u] == 1:
                        res = 0
                if not pending:
                    val[v] = res
                    top -= 1
    return val_arr


def thin_atomic_batch(offsets, site, hmat, key, rep0, int kmax):
    cdef int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef int64_t[::1] st = np.ascontiguousarray(site, dtype=np.int64)
    cdef double[:, ::1] H = np.ascontiguousarray(hmat, dtype=np.float64)
    cdef uint64_t k0 = <uint64_t>(int(key) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t r0 = <uint64_t>(int(rep0) & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t R = off.shape[0] - 1, N = off[R]
    out = np.zeros((kmax + 3, N), dtype=np.int8)
    cdef int8_t[:, ::1] e = out
    cdef Py_ssize_t r, lo, hi, i, j, m, maxm = 0
    cdef int k
    cdef uint64_t kr
    cdef double h
    cdef bint c
    for r in range(R):
        if off[r + 1] - off[r] > maxm:
            maxm = off[r + 1] - off[r]
    # scratch: conflict flags of the current row against earlier points
    conf_arr = np.zeros(max(1, maxm), dtype=np.int8)
    cdef int8_t[::1] conf = conf_arr
    with nogil:
        for r in range(R):
            lo = off[r]
            hi = off[r + 1]
            m = hi - lo
            kr = _mix(k0, r0 + <uint64_t>r)
            for j in range(m):
                e[kmax + 2, lo + j] = 1
            for j in range(m):
                for k in range(kmax + 2):
                    e[k, lo + j] = 1
                for i in range(j):
                    h = H[st[lo + i], st[lo + j]]
                    if h >= 1.0:
                        c = True
                    elif h <= 0.0:
                        c = False
                    else:
                        c = _unif(kr, <uint64_t>i, <uint64_t>j) < h
                    if c:
                        e[kmax + 2, lo + i] = 0
                        e[kmax + 2, lo + j] = 0
                        for k in range(1, kmax + 1):
                            if e[k - 1, lo + i]:
                                e[k, lo + j] = 0
                        if e[kmax + 1, lo + i]:
                            e[kmax + 1, lo + j] = 0
    return out


def rsa_line(pos, double length, double r):
    cdef double[::1] p = np.ascontiguousarray(pos, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i, c, cc, ncell
    ncell = max(1, <Py_ssize_t>ceil(length / r))
    cdef double width = length / ncell
    occ_arr = np.full(ncell, -1.0)
    has_arr = np.zeros(ncell, dtype=np.int8)
    acc_arr = np.zeros(n, dtype=np.int8)
    cdef double[::1] occ = occ_arr
    cdef int8_t[::1] has = has_arr
    cdef int8_t[::1] acc = acc_arr
    cdef double x, d
    cdef int dc
    cdef bint ok
    with nogil:
        for i in range(n):
            x = p[i]
            c = <Py_ssize_t>(x / width)
            if c >= ncell:
                c = ncell - 1
            ok = True
            for dc in range(-2, 3):
                cc = (c + dc) % ncell
                if cc < 0:
                    cc += ncell
                if has[cc]:
                    d = fabs(occ[cc] - x)
                    if length - d < d:
                        d = length - d
                    if d < r:
                        ok = False
                        break
            if ok:
                acc[i] = 1
                occ[c] = x
                has[c] = True
    return acc_arr
