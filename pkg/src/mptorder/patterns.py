"""Registered order patterns and their non-redundant mixture parameterizations.

Four-outcome patterns I-X are labelled by members A, B, C, D. ``TABLE1`` holds
the reference vertex sets verbatim (one tuple per vertex, in reference column
order). ``PATTERN_PAIRS`` holds the dominance pairs from which each vertex set
is regenerated by :func:`mptorder.polytope.enumerate_vertices`.

A parameterization maps ``theta`` in ``[0,1]^d`` to mixture weights; each weight
is a product of ``theta_i`` or ``1 - theta_i`` factors, stored as
``(index, complemented)`` tuples.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations

from .errors import PatternError
from .polytope import DominanceOrder, VertexSet, enumerate_vertices

LABELS = "ABCD"


def _vs(text: str) -> tuple[tuple[Fraction, ...], ...]:
    rows = [[Fraction(x) for x in line.split()] for line in text.strip().splitlines()]
    return tuple(zip(*rows))  # rows are categories A..D; columns are vertices


TABLE1 = {
    "I": _vs("""
        1 1/2 1/3 1/4
        0 1/2 1/3 1/4
        0 0   1/3 1/4
        0 0   0   1/4"""),
    "II": _vs("""
        1 0 0 1/4
        0 1 0 1/4
        0 0 1 1/4
        0 0 0 1/4"""),
    "III": _vs("""
        1 0 1/3 1/4
        0 1 1/3 1/4
        0 0 1/3 1/4
        0 0 0   1/4"""),
    "IV": _vs("""
        1 0 1/2 1/4
        0 1 1/2 1/4
        0 0 0   1/4
        0 0 0   1/4"""),
    "V": _vs("""
        1 1/2 1/2 1/3 1/4
        0 1/2 0   1/3 1/4
        0 0   1/2 1/3 1/4
        0 0   0   0   1/4"""),
    "VI": _vs("""
        1 1/2 1/3 1/3 1/4
        0 1/2 1/3 1/3 1/4
        0 0   1/3 0   1/4
        0 0   0   1/3 1/4"""),
    "VII": _vs("""
        1 0 1/3 1/3 1/4
        0 1 1/3 1/3 1/4
        0 0 1/3 0   1/4
        0 0 0   1/3 1/4"""),
    "VIII": _vs("""
        1 0 1/3 0   1/4
        0 1 1/3 1/2 1/4
        0 0 1/3 0   1/4
        0 0 0   1/2 1/4"""),
    "IX": _vs("""
        1 1/2 1/2 1/3 1/3 1/4
        0 1/2 0   1/3 1/3 1/4
        0 0   1/2 1/3 0   1/4
        0 0   0   0   1/3 1/4"""),
    "X": _vs("""
        1 1/2 1/2 1/2 1/3 1/3 1/3 1/4
        0 1/2 0   0   1/3 1/3 0   1/4
        0 0   1/2 0   1/3 0   1/3 1/4
        0 0   0   1/2 0   1/3 1/3 1/4"""),
}

# Dominance pairs (greater, lesser) reconstructed from the vertex sets: each
# vertex is uniform on an up-closed set. The listed pattern IV lists the
# midpoint of its first two vertices as a third vertex, which no order can
# produce; its pairs here are those of the only 4-element connected order
# missing from the list (the dual of IX), whose third vertex is (1/2,0,1/2,0).
PATTERN_PAIRS = {
    "I": ("AB", "BC", "CD"),
    "II": ("AD", "BD", "CD"),
    "III": ("AC", "BC", "CD"),
    "IV": ("AC", "CD", "BD"),
    "V": ("AB", "AC", "BD", "CD"),
    "VI": ("AB", "BC", "BD"),
    "VII": ("AC", "AD", "BC", "BD"),
    "VIII": ("AC", "BC", "BD"),
    "IX": ("AB", "AC", "BD"),
    "X": ("AB", "AC", "AD"),
}


def pattern_order(name: str) -> DominanceOrder:
    return DominanceOrder(4, tuple((LABELS.index(a), LABELS.index(b)) for a, b in PATTERN_PAIRS[name]))


def _f(spec: str) -> tuple[tuple[int, bool], ...]:
    """'1 -2 3' -> theta_1 (1-theta_2) theta_3 (1-based in the string)."""
    out = []
    for tok in spec.split():
        i = int(tok)
        out.append((abs(i) - 1, i < 0))
    return tuple(out)


def stick_formulas(d: int) -> tuple[tuple[tuple[int, bool], ...], ...]:
    """lambda_1 = 1-t1, lambda_2 = t1(1-t2), ..., lambda_{d+1} = t1...td."""
    out = []
    for v in range(d + 1):
        fs = [(i, False) for i in range(v)]
        if v < d:
            fs.append((v, True))
        out.append(tuple(fs))
    return tuple(out)


TABLE2 = {
    "V": tuple(map(_f, ["-1 -2 -3", "1 -2 -3", "-1 2 -3", "1 2 -3", "3"])),
    "VI": tuple(map(_f, ["1", "-1 -2 -3", "-1 2 -3", "-1 -2 3", "-1 2 3"])),
    "VIII": tuple(map(_f, ["1", "-1 -2 -3", "-1 2 -3", "-1 -2 3", "-1 2 3"])),
    "IX": tuple(map(_f, ["-1 -2 -3", "1 -2 -3", "-1 2 -3", "1 2 -3", "-2 3", "2 3"])),
    "X": tuple(map(_f, ["-1 -2 -3", "1 -2 -3", "-1 2 -3", "-1 -2 3",
                        "1 2 -3", "1 -2 3", "-1 2 3", "1 2 3"])),
}

K3_DOMINANT_FORMULAS = tuple(map(_f, ["-1 -2", "1 -2", "-1 2", "1 2"]))

K3_DOMINANT_VERTICES = tuple(tuple(map(Fraction, v.split())) for v in
                             ["1 0 0", "1/2 1/2 0", "1/2 0 1/2", "1/3 1/3 1/3"])
K3_DOMINATED_VERTICES = tuple(tuple(map(Fraction, v.split())) for v in
                              ["0 0 1", "0 1 0", "1/3 1/3 1/3"])

VII_NOTE = ("pattern VII has no known non-redundant parameterization that exhausts its "
            "polytope with three parameters; use overparameterized mode")


@dataclass(frozen=True)
class Pattern:
    """A polytope with vertices in a fixed order and its theta products.

    ``formulas`` is None when only the overparameterized representation exists.
    """

    name: str
    k: int
    vertices: tuple[tuple[Fraction, ...], ...]
    formulas: tuple[tuple[tuple[int, bool], ...], ...] | None
    pairs: tuple[tuple[int, int], ...] = ()

    @property
    def d(self) -> int:
        if self.formulas is None:
            raise PatternError(VII_NOTE)
        return 1 + max((i for f in self.formulas for i, _ in f), default=-1)

    @property
    def order(self) -> DominanceOrder:
        return DominanceOrder(self.k, self.pairs)


def _table_vertices(name: str) -> tuple[tuple[Fraction, ...], ...]:
    """Vertex list in reference column order, corrected for IV."""
    enumerated = enumerate_vertices(pattern_order(name)).vertices
    listed = TABLE1[name]
    if set(listed) == set(enumerated):
        return listed
    return enumerated


def table_pattern(name: str) -> Pattern:
    if name not in TABLE1:
        raise PatternError(f"unknown pattern {name!r}")
    verts = _table_vertices(name)
    if name in TABLE2:
        formulas = TABLE2[name]
    elif name == "VII":
        formulas = None
    else:
        formulas = stick_formulas(3)
    return Pattern(name, 4, verts, formulas, pattern_order(name).pairs)


def linear_pattern(k: int) -> Pattern:
    verts = enumerate_vertices(DominanceOrder.chain(k)).vertices
    return Pattern("linear", k, verts, stick_formulas(k - 1), DominanceOrder.chain(k).pairs)


def k3_dominant() -> Pattern:
    return Pattern("k3-dominant", 3, K3_DOMINANT_VERTICES, K3_DOMINANT_FORMULAS, ((0, 1), (0, 2)))


def k3_dominated() -> Pattern:
    return Pattern("k3-dominated", 3, K3_DOMINATED_VERTICES, stick_formulas(2), ((1, 0), (2, 0)))


PATTERN_NAMES = ("linear", "k3-dominant", "k3-dominated", "I", "II", "III", "IV", "V",
                 "VI", "VII", "VIII", "IX", "X")


def get_pattern(name: str, k: int | None = None) -> Pattern:
    if name == "linear":
        if k is None:
            raise PatternError("the linear pattern needs k")
        return linear_pattern(k)
    if name == "k3-dominant":
        return k3_dominant()
    if name == "k3-dominated":
        return k3_dominated()
    return table_pattern(name)


@dataclass(frozen=True)
class PatternMatch:
    """A registered pattern mapped onto a concrete group.

    ``vertices`` are in the group's member coordinates, ordered like the pattern.
    """

    pattern: Pattern
    vertices: VertexSet
    permutation: tuple[int, ...]  # group position p <-> pattern coordinate permutation[p]


def _match(pattern: Pattern, target: frozenset) -> PatternMatch | None:
    for perm in permutations(range(pattern.k)):
        mapped = tuple(tuple(v[perm[p]] for p in range(pattern.k)) for v in pattern.vertices)
        if frozenset(mapped) == target:
            return PatternMatch(pattern, VertexSet(mapped, "table"), perm)
    return None


def identify(order: DominanceOrder) -> PatternMatch:
    """Find a registered parameterization for ``order``.

    Any polytope with exactly ``k`` vertices is a simplex and gets stick-breaking
    weights (named ``linear``, ``k3-dominated`` or ``I``-``IV`` when it is one
    of those). Raises PatternError for VII and unregistered shapes.
    """
    vs = enumerate_vertices(order)
    target = vs.as_set()
    k = order.k
    candidates = []
    if k == 3:
        candidates = [k3_dominant(), k3_dominated()]
    elif k == 4:
        candidates = [table_pattern(n) for n in TABLE1]
    for pat in candidates:
        if len(pat.vertices) == len(vs):
            m = _match(pat, target)
            if m is not None:
                if m.pattern.formulas is None:
                    raise PatternError(VII_NOTE)
                return m
    if len(vs) == k:
        sizes = sorted(sum(1 for x in v if x) for v in vs.vertices)
        name = "linear" if sizes == list(range(1, k + 1)) else "simplicial"
        pat = Pattern(name, k, vs.vertices, stick_formulas(k - 1), order.pairs)
        return PatternMatch(pat, vs, tuple(range(k)))
    raise PatternError(f"no registered non-redundant parameterization for this order "
                       f"({len(vs)} vertices, k={k}); use overparameterized mode")
