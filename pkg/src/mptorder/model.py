"""MPT model representation, validation and category probabilities.

A model is a flat list of branches. Each branch belongs to one tree, ends in one
observable category and carries a product of factors: a parameter, the
complement ``1 - p`` of a binary parameter, or a fixed rational constant.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping

import numpy as np

from .config import TOL
from .errors import ModelError, ParamError

BINARY = "binary"
SIMPLEX = "simplex-member"


@dataclass(frozen=True)
class Factor:
    """One link probability in a branch product."""

    name: str | None = None
    complement: bool = False
    const: Fraction | None = None

    @classmethod
    def param(cls, name: str) -> "Factor":
        return cls(name=name)

    @classmethod
    def comp(cls, name: str) -> "Factor":
        return cls(name=name, complement=True)

    @classmethod
    def constant(cls, value) -> "Factor":
        return cls(const=Fraction(value))

    @property
    def is_const(self) -> bool:
        return self.name is None

    def value(self, params: Mapping[str, float]) -> float:
        if self.name is None:
            return float(self.const)
        v = params[self.name]
        return 1.0 - v if self.complement else v

    def __str__(self) -> str:
        if self.name is None:
            return str(self.const)
        return ("~" if self.complement else "") + self.name


@dataclass(frozen=True)
class Branch:
    tree: str
    category: str
    factors: tuple[Factor, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    def probability(self, params: Mapping[str, float]) -> float:
        p = 1.0
        for f in self.factors:
            p *= f.value(params)
        return p


@dataclass(frozen=True)
class Tree:
    name: str
    categories: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))


@dataclass(frozen=True)
class SimplexGroup:
    name: str
    members: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def k(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Parameter:
    name: str
    kind: str
    group: str | None = None


@dataclass(frozen=True)
class OrderSpec:
    """A dominance order over members of one simplex group.

    Chains keep the members and direction as written (``a <= b <= c`` or
    ``a >= b >= c``); partial orders store normalized pairs ``(greater, lesser)``.
    """

    group: str
    kind: str
    members: tuple[str, ...] = ()
    direction: str = ">="
    pairs: tuple[tuple[str, str], ...] = ()

    @classmethod
    def chain(cls, group: str, members, direction: str = ">=") -> "OrderSpec":
        if direction not in (">=", "<="):
            raise ValueError(f"bad chain direction {direction!r}")
        return cls(group=group, kind="chain", members=tuple(members), direction=direction)

    @classmethod
    def partial(cls, group: str, pairs) -> "OrderSpec":
        return cls(group=group, kind="partial", pairs=tuple((a, b) for a, b in pairs))

    @property
    def ranked(self) -> tuple[str, ...]:
        """Chain members from largest to smallest."""
        if self.kind != "chain":
            raise ValueError("only chains have a ranking")
        return self.members if self.direction == ">=" else tuple(reversed(self.members))

    def dominance_pairs(self) -> tuple[tuple[str, str], ...]:
        if self.kind == "chain":
            r = self.ranked
            return tuple(zip(r[:-1], r[1:]))
        return self.pairs

    def member_set(self) -> frozenset[str]:
        if self.kind == "chain":
            return frozenset(self.members)
        return frozenset(x for pair in self.pairs for x in pair)


@dataclass(frozen=True)
class Diagnostic:
    message: str
    where: tuple = ()

    def __str__(self) -> str:
        if not self.where:
            return self.message
        return f"{' '.join(map(str, self.where))}: {self.message}"


@dataclass(frozen=True)
class MptModel:
    binary: tuple[str, ...]
    groups: tuple[SimplexGroup, ...]
    trees: tuple[Tree, ...]
    branches: tuple[Branch, ...]
    orders: tuple[OrderSpec, ...] = ()

    def __post_init__(self):
        for name in ("binary", "groups", "trees", "orders"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        # branches sorted by (tree, category) declaration order; stable within
        rank = {}
        for ti, t in enumerate(self.trees):
            for ci, c in enumerate(t.categories):
                rank.setdefault((t.name, c), (ti, ci))
        big = (len(self.trees), 0)
        ordered = sorted(self.branches, key=lambda b: rank.get((b.tree, b.category), big))
        object.__setattr__(self, "branches", tuple(ordered))

    @property
    def parameters(self) -> tuple[Parameter, ...]:
        out = [Parameter(n, BINARY) for n in self.binary]
        for g in self.groups:
            out.extend(Parameter(m, SIMPLEX, g.name) for m in g.members)
        return tuple(out)

    @property
    def parameter_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    @property
    def n_free(self) -> int:
        return len(self.binary) + sum(g.k - 1 for g in self.groups)

    @property
    def n_categories(self) -> int:
        return sum(len(t.categories) for t in self.trees)

    @property
    def df_data(self) -> int:
        return sum(len(t.categories) - 1 for t in self.trees)

    def group(self, name: str) -> SimplexGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise ModelError(f"unknown simplex group {name!r}")

    def group_of(self) -> dict[str, str]:
        return {m: g.name for g in self.groups for m in g.members}

    def tree(self, name: str) -> Tree:
        for t in self.trees:
            if t.name == name:
                return t
        raise ModelError(f"unknown tree {name!r}")

    def replace(self, **changes) -> "MptModel":
        return replace(self, **changes)


# ----------------------------------------------------------------- assignments

def check_params(model: MptModel, params: Mapping[str, float], tol: float = TOL.algebraic) -> None:
    """Raise ParamError unless ``params`` is a valid assignment for ``model``."""
    names = set(model.parameter_names)
    unknown = sorted(set(params) - names)
    if unknown:
        raise ParamError(f"unknown parameter(s): {', '.join(unknown)}")
    missing = [n for n in model.parameter_names if n not in params]
    if missing:
        raise ParamError(f"missing parameter(s): {', '.join(missing)}")
    for n in model.parameter_names:
        v = params[n]
        if not (-tol <= v <= 1 + tol):
            raise ParamError(f"parameter {n} = {v!r} outside [0, 1]")
    for g in model.groups:
        s = sum(params[m] for m in g.members)
        if abs(s - 1.0) > tol:
            raise ParamError(f"simplex group {g.name} sums to {s!r}, not 1")


def uniform_assignment(model: MptModel) -> dict[str, float]:
    out = {n: 0.5 for n in model.binary}
    for g in model.groups:
        out.update({m: 1.0 / g.k for m in g.members})
    return out


def random_assignment(model: MptModel, rng: np.random.Generator) -> dict[str, float]:
    """Uniform draw: binary parameters on [0,1], simplex groups Dirichlet(1,...,1)."""
    out = {n: float(rng.uniform()) for n in model.binary}
    for g in model.groups:
        out.update(zip(g.members, map(float, rng.dirichlet(np.ones(g.k)))))
    return out


def category_probabilities(model: MptModel, params: Mapping[str, float],
                           check: bool = True) -> dict[str, dict[str, float]]:
    """Per tree, the probability of every category (sum of its branch products)."""
    if check:
        check_params(model, params)
    out = {t.name: dict.fromkeys(t.categories, 0.0) for t in model.trees}
    for b in model.branches:
        out[b.tree][b.category] += b.probability(params)
    return out


# ------------------------------------------------------------------ validation

def _structure(model: MptModel) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    seen = Counter(model.parameter_names)
    for name, count in seen.items():
        if count > 1:
            diags.append(Diagnostic(f"parameter {name!r} declared {count} times", ("param", name)))
    group_names = Counter(g.name for g in model.groups)
    for name, count in group_names.items():
        if count > 1:
            diags.append(Diagnostic(f"simplex group {name!r} declared {count} times", ("group", name)))
        if name in seen:
            diags.append(Diagnostic(f"simplex group {name!r} shadows a parameter name", ("group", name)))
    for g in model.groups:
        if g.k < 2:
            diags.append(Diagnostic(f"simplex group {g.name!r} needs at least 2 members", ("group", g.name)))

    tree_names = Counter(t.name for t in model.trees)
    for name, count in tree_names.items():
        if count > 1:
            diags.append(Diagnostic(f"tree {name!r} declared {count} times", ("tree", name)))
    if not model.trees:
        diags.append(Diagnostic("no trees declared"))
    cats = set()
    for t in model.trees:
        for c, count in Counter(t.categories).items():
            if count > 1:
                diags.append(Diagnostic(f"category {c!r} declared {count} times", ("category", t.name, c)))
        if not t.categories:
            diags.append(Diagnostic(f"tree {t.name!r} has no categories", ("tree", t.name)))
        cats.update((t.name, c) for c in t.categories)

    members = set(model.group_of())
    binary = set(model.binary)
    reached = set()
    for i, b in enumerate(model.branches):
        where = ("category", b.tree, b.category)
        if (b.tree, b.category) not in cats:
            diags.append(Diagnostic(f"branch ends in undeclared category {b.tree}/{b.category}", where))
            continue
        reached.add((b.tree, b.category))
        for f in b.factors:
            if f.is_const:
                if not (0 <= f.const <= 1):
                    diags.append(Diagnostic(f"constant factor {f.const} outside [0, 1]", where))
            elif f.name not in binary and f.name not in members:
                diags.append(Diagnostic(f"unknown parameter {f.name!r}", where))
            elif f.complement and f.name in members:
                diags.append(Diagnostic(
                    f"complement of simplex member {f.name!r} is not allowed", where))
    for key in sorted(cats - reached):
        diags.append(Diagnostic(f"category {key[1]!r} is not reached by any branch",
                                ("category",) + key))
    return diags


def _orders(model: MptModel) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    groups = {g.name: g for g in model.groups}
    by_group: dict[str, list[int]] = defaultdict(list)
    for i, spec in enumerate(model.orders):
        where = ("order", i)
        if spec.group not in groups:
            if spec.group in model.binary or spec.member_set() & set(model.binary):
                diags.append(Diagnostic("order constraints apply to simplex members only", where))
            else:
                diags.append(Diagnostic(f"order over unknown simplex group {spec.group!r}", where))
            continue
        g = groups[spec.group]
        outside = sorted(spec.member_set() - set(g.members))
        if outside:
            if set(outside) & set(model.binary):
                diags.append(Diagnostic("order constraints apply to simplex members only", where))
            else:
                diags.append(Diagnostic(
                    f"{', '.join(outside)} not members of simplex group {g.name!r}", where))
            continue
        if spec.kind == "chain":
            if len(spec.members) < 2:
                diags.append(Diagnostic("a chain needs at least 2 members", where))
            if len(set(spec.members)) != len(spec.members):
                diags.append(Diagnostic("chain repeats a member (cyclic order)", where))
        else:
            if not spec.pairs:
                diags.append(Diagnostic("partial order declares no pairs", where))
            if any(a == b for a, b in spec.pairs) or _has_cycle(spec.pairs):
                diags.append(Diagnostic("partial order is cyclic", where))
        by_group[spec.group].append(i)
    for gname, idx in by_group.items():
        for a_pos, a in enumerate(idx):
            for b in idx[a_pos + 1:]:
                if model.orders[a].member_set() & model.orders[b].member_set():
                    diags.append(Diagnostic(
                        f"overlapping order constraints on group {gname!r}", ("order", b)))
    return diags


def _has_cycle(pairs) -> bool:
    succ = defaultdict(set)
    for a, b in pairs:
        succ[a].add(b)
    state: dict[str, int] = {}

    def visit(u) -> bool:
        state[u] = 1
        for v in succ[u]:
            s = state.get(v, 0)
            if s == 1 or (s == 0 and visit(v)):
                return True
        state[u] = 2
        return False

    return any(state.get(u, 0) == 0 and visit(u) for u in list(succ))


def _completeness(model: MptModel, n_probes: int = 3) -> list[Diagnostic]:
    rng = np.random.default_rng(20240101)
    probes = [uniform_assignment(model)] + [random_assignment(model, rng) for _ in range(n_probes)]
    diags = []
    for t in model.trees:
        for params in probes:
            probs = category_probabilities(model, params, check=False)[t.name]
            total = sum(probs.values())
            if abs(total - 1.0) > TOL.structural:
                diags.append(Diagnostic(
                    f"tree {t.name!r}: category probabilities sum to {total:.12g} at a probe point",
                    ("tree", t.name)))
                break
    return diags


def validate(model: MptModel) -> list[Diagnostic]:
    """Structural diagnostics; an empty list means the model is valid."""
    diags = _structure(model)
    diags += _orders(model)
    if not diags:
        diags += _completeness(model)
    return diags


def ensure_valid(model: MptModel) -> MptModel:
    diags = validate(model)
    if diags:
        raise ModelError("invalid model:\n  " + "\n  ".join(map(str, diags)))
    return model
