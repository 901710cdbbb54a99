"""Linear functional systems behind the p.g.fl equations.

A system acts on tuples of test functions s = (s_0, ..., s_{R-1}), one row
per point class.  Its evolution equation has the shape

    dG/dt (s) = sum_x lambda_x sum_terms c_term(x, s) G(T_term(s, x))

where ``T_term`` multiplies the rows flagged in ``mask`` by (1 - h(x, .)) and
``c_term(x, s) = sum_{(row, sign)} sign * (s_row(x) - 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Term:
    mask: tuple[bool, ...]
    coef: tuple[tuple[int, int], ...]  # (row, sign)
    label: str = ""

    def entry_weight(self, tag: int) -> int:
        """Derivative of the coefficient with respect to row ``tag`` at the anchor."""
        return sum(sg for r, sg in self.coef if r == tag)


@dataclass(frozen=True)
class LinearSystem:
    nrows: int
    terms: tuple[Term, ...]
    name: str = ""


def f_inf_system() -> LinearSystem:
    """Single row: the retained set of random sequential adsorption."""
    return LinearSystem(1, (Term((True,), ((0, 1),), "H"),), "f_inf")


def _odd_upto(a: int, k: int) -> set[int]:
    return set(range(a, k + 1, 2))


def _even_upto(k: int) -> set[int]:
    return set(range(0, k + 1, 2))


@dataclass(frozen=True)
class KMaternSystem:
    """Index bookkeeping for the joint functional of (Q_1, ..., Q_k, R_k).

    ``I[j]`` lists the m <= k with Q_j inside M_m, ``J`` the m <= k with R_k
    inside M_m.  ``w`` is the pairing shown next to the evolution equation
    (index 0 stands for the constant function 1).  ``terms`` is the system
    actually integrated; see ``region_terms`` for its construction.
    """

    k: int
    I: dict[int, tuple[int, ...]]
    J: tuple[int, ...]
    w: dict[int, int]
    transform_masks: dict[int, tuple[bool, ...]] = field(repr=False)
    terms: tuple[Term, ...] = field(repr=False)

    @property
    def nrows(self) -> int:
        return self.k + 1

    def system(self) -> LinearSystem:
        return LinearSystem(self.k + 1, self.terms, f"g_{self.k}")

    def members(self, m: int) -> tuple[list[int], bool]:
        """Rows (1-based Q indices) and R flag making up M_m."""
        return [j for j in range(1, self.k + 1) if m in self.I[j]], m in self.J

    def u_vector_rows(self) -> list[list[int]]:
        """For each g-row, the M indices whose test functions multiply into it."""
        rows = [[m for m in range(self.k + 1) if m in self.I[j]] for j in range(1, self.k + 1)]
        rows.append([m for m in range(self.k + 1) if m in self.J])
        return rows


def _I_sets(k: int) -> dict[int, tuple[int, ...]]:
    out = {}
    for j in range(1, k + 1):
        if j % 2 == 1:
            s = _odd_upto(j, k) | _even_upto(k)
        else:
            s = set(range(0, j - 1, 2))
        out[j] = tuple(sorted(s))
    return out


def _J_set(k: int) -> tuple[int, ...]:
    if k % 2 == 1:
        return tuple(range(0, k, 2))
    return tuple(range(0, k + 1, 2))


def _w_map(k: int) -> dict[int, int]:
    w = {}
    if k % 2 == 0:
        for i in range(1, k + 1):
            w[i] = i + 2 if i % 2 == 1 else i - 2
        w[k + 1] = k
    else:
        for i in range(1, k):
            w[i] = i + 2 if i % 2 == 1 else i - 2
        w[k] = k + 1
        w[k + 1] = k - 1
    return w


def region_terms(k: int, I: dict[int, tuple[int, ...]], J: tuple[int, ...]) -> tuple[Term, ...]:
    """Terms of the joint system obtained by classifying a new arrival.

    A point arriving at x joins M_m iff it conflicts with nothing in M_{m-1};
    write p_m for that conditional probability (p_0 = 1, p_{-1} = 0).  The
    nesting M_1 c M_3 c ... c M_4 c M_2 c M_0 makes each class a difference
    of two such events:

        Q_{2i}   : p_{2i-2} - p_{2i}        Q_{2i-1} : p_{2i-1} - p_{2i-3}
        R_k      : p_k - p_{k-1} (k even),  p_{k-1} - p_k (k odd)

    and E[p_m * prod] is the functional at the tuple whose rows contained in
    M_{m-1} are multiplied by (1 - h(x, .)).
    """
    regions: dict[int, list[tuple[int, int]]] = {}

    def add(m: int, row: int, sign: int):
        if m < 0:
            return  # p_{-1} = 0
        regions.setdefault(m, []).append((row, sign))

    for j in range(1, k + 1):
        row = j - 1
        if j % 2 == 0:
            add(j - 2, row, +1)
            add(j, row, -1)
        else:
            add(j, row, +1)
            add(j - 2, row, -1)
    if k % 2 == 0:
        add(k, k, +1)
        add(k - 1, k, -1)
    else:
        add(k - 1, k, +1)
        add(k, k, -1)

    terms = []
    for m in sorted(regions):
        mask = tuple([(m - 1) in I[j] for j in range(1, k + 1)] + [(m - 1) in J])
        terms.append(Term(mask, tuple(regions[m]), f"p{m}"))
    return tuple(terms)


def index_sets(k: int) -> KMaternSystem:
    """Index sets, displayed pairing and integrated terms for the order-k system."""
    if int(k) < 1:
        raise ValueError("k must be >= 1")
    k = int(k)
    I = _I_sets(k)
    J = _J_set(k)
    masks = {}
    for i in range(1, k + 2):
        masks[i] = tuple([(i - 1) in I[j] for j in range(1, k + 1)] + [(i - 1) in J])
    return KMaternSystem(k, I, J, _w_map(k), masks, region_terms(k, I, J))


def displayed_system(k: int) -> LinearSystem:
    """The pairing as printed beside the evolution equation.

    Term i carries the transform H_{i,k} and coefficient -(w_i - v_i).  Kept
    for comparison only: it is not consistent with the k = 1 case derived
    from first principles (see ``region_terms``).
    """
    ks = index_sets(k)
    terms = []
    for i in range(1, k + 2):
        wi = ks.w[i]
        coef = [(i - 1, +1)]
        if wi != 0:
            coef.append((wi - 1, -1))
        terms.append(Term(ks.transform_masks[i], tuple(coef), f"H{i}"))
    return LinearSystem(k + 1, tuple(terms), f"g_{k}_displayed")
