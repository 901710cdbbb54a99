"""Pure-Python/numpy implementations of the hot kernels.

These define the reference semantics.  ``_ckernels`` (Cython) must return
bit-identical results; ``kernels`` picks one of the two at import time.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
M1 = 0xBF58476D1CE4E5B9
M2 = 0x94D049BB133111EB
INV53 = 1.0 / 9007199254740992.0


def splitmix64(x: int) -> int:
    x = (x + GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * M1) & MASK64
    x = ((x ^ (x >> 27)) * M2) & MASK64
    return x ^ (x >> 31)


def mix(key: int, a: int) -> int:
    """Derive a 64-bit key from (key, a)."""
    return splitmix64((key & MASK64) ^ splitmix64(a & MASK64))


def _splitmix_arr(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(GOLDEN)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(M1)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(M2)
    return x ^ (x >> np.uint64(31))


def keyed_uniform(key: int, a, b) -> np.ndarray:
    """Uniform [0,1) draws addressed by (key, a, b); vectorized over a, b."""
    a = np.asarray(a).astype(np.uint64)
    b = np.asarray(b).astype(np.uint64)
    with np.errstate(over="ignore"):
        k = np.uint64(key & MASK64)
        ka = _splitmix_arr(k ^ _splitmix_arr(a))
        z = _splitmix_arr(ka ^ _splitmix_arr(b))
    return (z >> np.uint64(11)).astype(np.float64) * INV53


def greedy_accept(order, indptr, indices) -> np.ndarray:
    """Accept vertices in the given order unless an accepted neighbour exists."""
    n = len(order)
    acc = np.zeros(n, dtype=np.int8)
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    for v in np.asarray(order).tolist():
        ok = 1
        for u in indices[indptr[v]:indptr[v + 1]].tolist():
            if acc[u]:
                ok = 0
                break
        acc[v] = ok
    return acc


def ek_rounds(pred_indptr, pred_indices, kmax: int) -> np.ndarray:
    """Rows e_0..e_kmax by synchronous rounds over all vertices."""
    pred_indptr = np.asarray(pred_indptr)
    pred_indices = np.asarray(pred_indices)
    n = len(pred_indptr) - 1
    out = np.zeros((kmax + 1, n), dtype=np.int8)
    out[0] = 1
    for k in range(1, kmax + 1):
        prev = out[k - 1]
        cur = out[k]
        for v in range(n):
            ok = 1
            for u in pred_indices[pred_indptr[v]:pred_indptr[v + 1]].tolist():
                if prev[u]:
                    ok = 0
                    break
            cur[v] = ok
    return out


def einf_dfs(pred_indptr, pred_indices) -> np.ndarray:
    """e_inf by memoized depth-first evaluation of the ancestor recursion."""
    pred_indptr = np.asarray(pred_indptr)
    pred_indices = np.asarray(pred_indices)
    n = len(pred_indptr) - 1
    val = np.full(n, -1, dtype=np.int8)
    for root in range(n):
        if val[root] >= 0:
            continue
        stack = [root]
        while stack:
            v = stack[-1]
            if val[v] >= 0:
                stack.pop()
                continue
            pending = False
            res = 1
            for u in pred_indices[pred_indptr[v]:pred_indptr[v + 1]].tolist():
                if val[u] < 0:
                    stack.append(u)
                    pending = True
                elif val[u] == 1:
                    res = 0
            if not pending:
                val[v] = res
                stack.pop()
    return val


def thin_atomic_batch(offsets, site, hmat, key: int, rep0: int, kmax: int) -> np.ndarray:
    """Selection flags for a batch of replications on an atomic model.

    Points of replication r occupy ``offsets[r]:offsets[r+1]`` and are already
    sorted by timer; their local index inside the replication is the conflict
    id.  The conflict between local points i < j is drawn as
    ``keyed_uniform(mix(key, rep0 + r), i, j) < h``.

    Returns int8 rows: e_0..e_kmax, then e_inf, then the type I flag.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    site = np.asarray(site, dtype=np.int64)
    hmat = np.asarray(hmat, dtype=np.float64)
    N = int(offsets[-1])
    out = np.zeros((kmax + 3, N), dtype=np.int8)
    for r in range(len(offsets) - 1):
        lo, hi = int(offsets[r]), int(offsets[r + 1])
        m = hi - lo
        if m == 0:
            continue
        kr = mix(key, rep0 + r)
        s = site[lo:hi]
        hh = hmat[s[:, None], s[None, :]]
        ii, jj = np.triu_indices(m, 1)
        hv = hh[ii, jj]
        c = hv >= 1.0
        soft = (hv > 0.0) & ~c
        if soft.any():
            u = keyed_uniform(kr, ii[soft], jj[soft])
            c[np.flatnonzero(soft)] = u < hv[soft]
        conf = np.zeros((m, m), dtype=bool)
        conf[ii[c], jj[c]] = True
        conf[jj[c], ii[c]] = True
        e = np.zeros((kmax + 2, m), dtype=np.int8)
        e[0] = 1
        for j in range(m):
            preds = np.flatnonzero(conf[:j, j])
            for k in range(1, kmax + 1):
                e[k, j] = 0 if np.any(e[k - 1, preds]) else 1
            e[kmax + 1, j] = 0 if np.any(e[kmax + 1, preds]) else 1
        out[: kmax + 2, lo:hi] = e
        out[kmax + 2, lo:hi] = ~conf.any(axis=1)
    return out


def rsa_line(pos, length: float, r: float) -> np.ndarray:
    """Greedy acceptance on a circle of given length with exclusion |x-y| < r.

    ``pos`` must already be in timer order.  Returns accept flags.
    """
    pos = np.asarray(pos, dtype=np.float64)
    # cells no wider than r hold at most one accepted point
    ncell = max(1, int(np.ceil(length / r)))
    width = length / ncell
    occ = np.full(ncell, -1.0)
    has = np.zeros(ncell, dtype=bool)
    acc = np.zeros(len(pos), dtype=np.int8)
    for i, x in enumerate(pos.tolist()):
        c = int(x / width)
        if c >= ncell:
            c = ncell - 1
        ok = True
        for dc in (-2, -1, 0, 1, 2):
            cc = (c + dc) % ncell
            if has[cc]:
                d = abs(occ[cc] - x)
                d = min(d, length - d)
                if d < r:
                    ok = False
                    break
        if ok:
            acc[i] = 1
            occ[c] = x
            has[c] = True
    return acc
