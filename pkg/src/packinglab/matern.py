"""Conflict graph and the Matérn thinnings built on it.

Vertices are positions 0..n-1 inside a pattern; public functions speak in
point ids.  An edge runs from the earlier to the later point of every
conflicting pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .core import ConflictRealization, TimedPointPattern

INF = math.inf


class TimerTieError(ValueError):
    pass


class InternalConsistencyError(AssertionError):
    """Two independent computations of the same object disagree."""


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst[order].astype(np.int64)


@dataclass
class ConflictGraph:
    ids: np.ndarray
    timers: np.ndarray
    src: np.ndarray  # earlier endpoint (position)
    dst: np.ndarray  # later endpoint (position)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @cached_property
    def pred(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(self.n, self.dst, self.src)

    @cached_property
    def succ(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(self.n, self.src, self.dst)

    @cached_property
    def undirected(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(self.n, np.r_[self.src, self.dst], np.r_[self.dst, self.src])

    @cached_property
    def timer_order(self) -> np.ndarray:
        return np.argsort(self.timers, kind="stable")

    def predecessors(self, v: int) -> np.ndarray:
        ip, ix = self.pred
        return ix[ip[v]:ip[v + 1]]

    # -- ancestry -----------------------------------------------------------
    @cached_property
    def ancestor_bits(self) -> np.ndarray:
        """Packed ancestor sets: bit u of row v set iff u is an ancestor of v."""
        n = self.n
        words = max(1, (n + 63) // 64)
        bits = np.zeros((n, words), dtype=np.uint64)
        ip, ix = self.pred
        one = np.uint64(1)
        for v in self.timer_order.tolist():
            ps = ix[ip[v]:ip[v + 1]]
            if len(ps) == 0:
                continue
            row = np.bitwise_or.reduce(bits[ps], axis=0)
            for u in ps.tolist():
                row[u >> 6] |= one << np.uint64(u & 63)
            bits[v] = row
        return bits

    def ancestors(self, v: int) -> np.ndarray:
        row = self.ancestor_bits[v]
        flags = np.unpackbits(row.view(np.uint8), bitorder="little")[: self.n]
        return np.flatnonzero(flags)

    @cached_property
    def ancestor_counts(self) -> np.ndarray:
        b = self.ancestor_bits.view(np.uint8)
        return np.unpackbits(b, axis=1).sum(axis=1).astype(np.int64)

    @cached_property
    def depth(self) -> np.ndarray:
        """Length of the longest directed path ending at each vertex."""
        d = np.zeros(self.n, dtype=np.int64)
        ip, ix = self.pred
        for v in self.timer_order.tolist():
            ps = ix[ip[v]:ip[v + 1]]
            if len(ps):
                d[v] = d[ps].max() + 1
        return d

    @property
    def max_depth(self) -> int:
        return int(self.depth.max()) if self.n else 0

    # -- selections ---------------------------------------------------------
    def e_rows(self, kmax: int) -> np.ndarray:
        """Rows e_0..e_kmax (synchronous rounds)."""
        ip, ix = self.pred
        return kernels.ek_rounds(ip, ix, int(kmax))

    def e_k(self, k: int) -> np.ndarray:
        return self.e_rows(k)[k].astype(bool)

    def e_inf(self) -> np.ndarray:
        """e_inf by greedy acceptance and by memoized recursion; both must agree."""
        ip, ix = self.undirected
        greedy = kernels.greedy_accept(self.timer_order, ip, ix)
        pp, px = self.pred
        rec = kernels.einf_dfs(pp, px)
        if not np.array_equal(greedy, rec):
            bad = np.flatnonzero(greedy != rec)
            raise InternalConsistencyError(f"greedy and recursive e_inf differ at {len(bad)} vertices")
        return greedy.astype(bool)

    def type_I(self) -> np.ndarray:
        deg = np.bincount(np.r_[self.src, self.dst], minlength=self.n)
        return deg == 0

    def selection(self, j) -> np.ndarray:
        """Membership flags of M_j (j a non-negative integer or inf)."""
        if j == INF:
            return self.e_inf()
        j = int(j)
        if j < 0:
            return np.zeros(self.n, bool)
        if j == 0:
            return np.ones(self.n, bool)
        return self.e_k(j)


def build_conflict_graph(pattern: TimedPointPattern, conflicts: ConflictRealization) -> ConflictGraph:
    """Directed conflict graph; edges follow strictly increasing timers."""
    n = len(pattern)
    t = pattern.timers
    if n > 1 and len(np.unique(t)) != n:
        raise TimerTieError("timer tie in pattern; the conflict graph is undefined")
    e = conflicts.edges
    if len(e):
        pa = pattern.index_of(e[:, 0])
        pb = pattern.index_of(e[:, 1])
        keep = (pa >= 0) & (pb >= 0)
        pa, pb = pa[keep], pb[keep]
    else:
        pa = pb = np.zeros(0, dtype=np.int64)
    earlier = t[pa] < t[pb]
    src = np.where(earlier, pa, pb).astype(np.int64)
    dst = np.where(earlier, pb, pa).astype(np.int64)
    return ConflictGraph(pattern.ids.copy(), t.copy(), src, dst)


def _ids(pattern: TimedPointPattern, flags: np.ndarray) -> np.ndarray:
    return np.sort(pattern.ids[np.asarray(flags, bool)])


def matern_type_I(pattern: TimedPointPattern, conflicts: ConflictRealization) -> np.ndarray:
    """Ids of points with no conflict at all."""
    return _ids(pattern, build_conflict_graph(pattern, conflicts).type_I())


def matern_k(pattern: TimedPointPattern, conflicts: ConflictRealization, k: int) -> np.ndarray:
    """Ids with e_k = 1; k = 1 is the classical type II selection."""
    if int(k) < 1:
        raise ValueError("k must be a positive integer")
    return _ids(pattern, build_conflict_graph(pattern, conflicts).e_k(int(k)))


def matern_inf(pattern: TimedPointPattern, conflicts: ConflictRealization) -> np.ndarray:
    """Ids accepted by random sequential adsorption (e_inf = 1)."""
    return _ids(pattern, build_conflict_graph(pattern, conflicts).e_inf())


def restrict(pattern: TimedPointPattern, s: float, t: float) -> TimedPointPattern:
    """Points with timers in [s, t); ids are preserved."""
    if not s < t:
        raise ValueError(f"restriction needs s < t, got s={s}, t={t}")
    if s < 0:
        raise ValueError("s must be non-negative")
    mask = (pattern.timers >= s) & (pattern.timers < t)
    out = pattern.subset(mask)
    out.t_max = min(float(t), pattern.t_max)
    return out


def partition_from_rows(e: np.ndarray, k: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Q_1..Q_k and R_k as boolean masks from rows e_0..e_k."""
    n = e.shape[1]

    def M(j):
        return np.zeros(n, bool) if j < 0 else e[j].astype(bool)

    Q = []
    for i in range(1, k + 1):
        if i % 2 == 0:
            Q.append(M(i - 2) & ~M(i))
        else:
            Q.append(M(i) & ~M(i - 2))
    R = (M(k) & ~M(k - 1)) if k % 2 == 0 else (M(k - 1) & ~M(k))
    stack = np.vstack(Q + [R]).astype(np.int64)
    if np.any(stack.sum(axis=0) != 1):
        raise InternalConsistencyError("Q_1..Q_k, R_k do not partition the pattern")
    return Q, R


def partition_QR(pattern: TimedPointPattern, conflicts: ConflictRealization, k: int):
    """Id sets (Q_1, ..., Q_k), R_k."""
    g = build_conflict_graph(pattern, conflicts)
    Q, R = partition_from_rows(g.e_rows(k), k)
    return [_ids(pattern, q) for q in Q], _ids(pattern, R)


def sandwich_layers(pattern: TimedPointPattern, conflicts: ConflictRealization, j, s: float, t: float):
    """Lower and upper approximations of T_{s,t}(M_j) built from T_s(M_{j-1}).

    For j = inf the reference set is T_s(M_inf).  Returns (down, up) id arrays.
    """
    if not 0 < s < t:
        raise ValueError("need 0 < s < t")
    g = build_conflict_graph(pattern, conflicts)
    ref = g.selection(INF if j == INF else int(j) - 1)
    tm = pattern.timers
    early = ref & (tm < s)
    layer = (tm >= s) & (tm < t)
    hits_early = np.zeros(g.n, bool)
    hits_layer = np.zeros(g.n, bool)
    for a, b in ((g.src, g.dst), (g.dst, g.src)):
        hits_early[a[early[b]]] = True
        hits_layer[a[layer[b]]] = True
    up = layer & ~hits_early
    down = up & ~hits_layer
    return _ids(pattern, down), _ids(pattern, up)


def conflict_pairs_within(pattern: TimedPointPattern, conflicts: ConflictRealization, ids) -> int:
    """Number of conflicting pairs with both endpoints among ``ids``."""
    return len(conflicts.restricted_to(np.asarray(ids)))


__all__ = [
    "ConflictGraph",
    "TimerTieError",
    "InternalConsistencyError",
    "build_conflict_graph",
    "matern_type_I",
    "matern_k",
    "matern_inf",
    "restrict",
    "partition_QR",
    "partition_from_rows",
    "sandwich_layers",
    "conflict_pairs_within",
]
