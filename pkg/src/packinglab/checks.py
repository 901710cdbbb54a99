"""Per-realization structural checks on the thinning hierarchy.

Each function returns violation counts so that suites can aggregate them
over many seeded realizations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConflictRealization, Model, TimedPointPattern, validate_model
from .matern import INF, build_conflict_graph, restrict, sandwich_layers
from .rain import sample_conflicts, sample_rain


def _subset(a: np.ndarray, b: np.ndarray) -> bool:
    return not np.any(a & ~b)


def nesting_violations(e: np.ndarray, einf: np.ndarray) -> int:
    """Chain M_1 c M_3 c ... c M_inf c ... c M_2 c M_0 on rows e_0..e_K."""
    K = e.shape[0] - 1
    odd = [e[k].astype(bool) for k in range(1, K + 1, 2)]
    even = [e[k].astype(bool) for k in range(0, K + 1, 2)]
    bad = 0
    bad += sum(not _subset(a, b) for a, b in zip(odd, odd[1:]))
    bad += sum(not _subset(b, a) for a, b in zip(even, even[1:]))
    if odd:
        bad += not _subset(odd[-1], einf)
    bad += not _subset(einf, even[-1])
    return int(bad)


@dataclass
class RealizationReport:
    n: int
    violations: dict[str, int] = field(default_factory=dict)
    max_ancestors: int = 0
    mean_ancestors: float = 0.0


def check_realization(
    pattern: TimedPointPattern,
    conflicts: ConflictRealization,
    kmax: int | None = None,
    s_frac: float = 0.5,
) -> RealizationReport:
    """All structural invariants on one realization.

    kmax defaults to max|A(x)| + 2 so that the stabilization check sees at
    least one order beyond the bound.
    """
    g = build_conflict_graph(pattern, conflicts)
    counts = g.ancestor_counts if g.n else np.zeros(0, dtype=np.int64)
    amax = int(counts.max()) if g.n else 0
    K = max(4, amax + 2) if kmax is None else int(kmax)
    e = g.e_rows(K).astype(bool)
    einf = g.e_inf()
    t1 = g.type_I()
    v: dict[str, int] = {}
    v["nesting"] = nesting_violations(e, einf)
    v["conflict_free_inf"] = int(np.count_nonzero(einf[g.src] & einf[g.dst]))
    v["typeI_in_1"] = int(not _subset(t1, e[1]))
    v["typeI_in_inf"] = int(not _subset(t1, einf))
    # e_k = e_inf for every k beyond the ancestor count of each point
    stab = 0
    for k in range(1, K + 1):
        beyond = counts < k
        stab += int(np.count_nonzero(beyond & (e[k] != einf)))
    v["stabilization"] = stab

    t_max = pattern.t_max
    s = s_frac * t_max
    sel_full = {1: e[1], 2: e[2], INF: einf}
    sandwich = 0
    commute = 0
    if g.n:
        for j in (1, 2, INF):
            down, up = sandwich_layers(pattern, conflicts, j, s, t_max)
            layer = (pattern.timers >= s) & (pattern.timers < t_max)
            true_ids = pattern.ids[layer & sel_full[j]]
            sandwich += int(not np.all(np.isin(down, true_ids)))
            sandwich += int(not np.all(np.isin(true_ids, up)))
        early = restrict(pattern, 0.0, s)
        ge = build_conflict_graph(early, conflicts)
        mask = pattern.timers < s
        for j in (1, 2, INF):
            sub = ge.selection(j)
            commute += int(not np.array_equal(sub, sel_full[j][mask]))
    v["sandwich"] = sandwich
    v["commutation"] = commute
    return RealizationReport(g.n, v, amax, float(counts.mean()) if g.n else 0.0)


def structural_sweep(model: Model, t_max: float, realizations: int, seed: int, window=None) -> dict:
    """Aggregate violations and ancestor statistics over seeded realizations."""
    from . import kernels

    totals: dict[str, int] = {}
    anc_sum = 0.0
    npts = 0
    amax = 0
    for r in range(realizations):
        s = kernels.mix(int(seed), r)
        pat = sample_rain(model, window, t_max, s)
        rel = sample_conflicts(pat, model, s)
        rep = check_realization(pat, rel)
        for key, val in rep.violations.items():
            totals[key] = totals.get(key, 0) + val
        anc_sum += rep.mean_ancestors * rep.n
        npts += rep.n
        amax = max(amax, rep.max_ancestors)
    nbar = validate_model(model).nbar
    return {
        "violations": totals,
        "mean_ancestors": anc_sum / npts if npts else 0.0,
        "ancestor_bound": float(np.exp(t_max * nbar)),
        "max_ancestors": amax,
        "points": npts,
        "nbar": nbar,
    }


__all__ = ["nesting_violations", "check_realization", "RealizationReport", "structural_sweep"]
