"""Rewriting order-constrained MPT models as unconstrained ones.

A linear order ``eta_1 >= ... >= eta_k`` on a simplex group is replaced by a
mixture over the vertices ``(1,0,..)``, ``(1/2,1/2,0,..)``, ..., ``(1/k,...,1/k)``
with free weights ``lambda``. Orders on a subset of a group first split the
group into blocks; general partial orders use the vertices of their polytope
with either one weight per vertex (overparameterized) or a registered
non-redundant ``theta`` parameterization.

Each rewrite is recorded as a step that maps parameter assignments in both
directions, so estimates of the rewritten model can be carried back to the
original parameters.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from .binary import fresh_name
from .config import TOL
from .errors import OrderError, PatternError
from .model import Branch, Factor, MptModel, OrderSpec, SimplexGroup, ensure_valid
from .patterns import (K3_DOMINANT_FORMULAS, TABLE2, VII_NOTE, Pattern, get_pattern,
                       identify, stick_formulas)
from .polytope import DominanceOrder, MixtureWeights, VertexSet, recover_lambda, sample_polytope

# ------------------------------------------------------------ eta <-> lambda


def eta_to_lambda(eta, tol: float = TOL.algebraic) -> MixtureWeights:
    """Weights of the chain vertices for a non-increasing simplex point."""
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 1 or len(eta) < 1:
        raise OrderError("eta must be a non-empty vector")
    if abs(eta.sum() - 1.0) > tol or np.any(eta < -tol):
        raise OrderError(f"eta={eta.tolist()} is not a probability vector")
    if np.any(np.diff(eta) > tol):
        raise OrderError(f"eta={eta.tolist()} is not non-increasing")
    k = len(eta)
    j = np.arange(1, k + 1)
    lam = j * (eta - np.append(eta[1:], 0.0))
    lam = np.clip(lam, 0.0, None)
    return MixtureWeights(lam / lam.sum())


def lambda_to_eta(lam) -> np.ndarray:
    """``eta_j = sum_{i >= j} lambda_i / i``."""
    v = lam.values if isinstance(lam, MixtureWeights) else np.asarray(lam, dtype=float)
    k = len(v)
    return np.cumsum((v / np.arange(1, k + 1))[::-1])[::-1]


# ------------------------------------------------------------- theta maps


@dataclass(frozen=True)
class FreeTheta:
    values: np.ndarray
    pattern: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < -TOL.algebraic) or np.any(v > 1 + TOL.algebraic):
            raise ValueError(f"theta out of [0,1]: {v}")
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))


STICK_PATTERNS = ("linear", "simplicial", "k3-dominated", "I", "II", "III", "IV")


def pattern_formulas(tag: str, d: int):
    if tag in STICK_PATTERNS:
        return stick_formulas(d)
    if tag == "k3-dominant":
        return K3_DOMINANT_FORMULAS
    if tag in TABLE2:
        return TABLE2[tag]
    if tag == "VII":
        raise PatternError(VII_NOTE)
    raise PatternError(f"unregistered pattern {tag!r}")


def formula_values(formulas, theta) -> np.ndarray:
    """Evaluate theta products; theta may have shape (..., d)."""
    theta = np.asarray(theta, dtype=float)
    out = []
    for f in formulas:
        v = np.ones(theta.shape[:-1])
        for i, comp in f:
            v = v * ((1.0 - theta[..., i]) if comp else theta[..., i])
        out.append(v)
    return np.stack(out, axis=-1)


def formula_jacobian(formulas, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[-1]
    J = np.zeros((len(formulas), d))
    for v, f in enumerate(formulas):
        for n, (i, comp) in enumerate(f):
            g = -1.0 if comp else 1.0
            for m, (i2, c2) in enumerate(f):
                if m != n:
                    g *= (1.0 - theta[i2]) if c2 else theta[i2]
            J[v, i] += g
    return J


def theta_to_lambda(theta: FreeTheta) -> MixtureWeights:
    formulas = pattern_formulas(theta.pattern, len(theta.values))
    lam = formula_values(formulas, theta.values)
    return MixtureWeights(lam / lam.sum())


def stick_inverse(lam) -> np.ndarray:
    """Inverse of :func:`patterns.stick_formulas`; a zero remainder gives 0."""
    lam = np.asarray(lam, dtype=float)
    out, rest = [], 1.0
    for v in lam[:-1]:
        t = 1.0 - v / rest if rest > 0 else 0.0
        out.append(min(max(t, 0.0), 1.0))
        rest -= v
    return np.array(out)


def solve_theta_k3(eta, tol: float = TOL.algebraic) -> FreeTheta:
    """Closed-form theta for ``eta_1 >= eta_2, eta_1 >= eta_3`` (k = 3).

    With ``delta = eta_3 - eta_2`` and ``a = (3 - 2 delta) / 2``:
    ``theta_1 = a - sqrt(a**2 - 6 eta_2)`` and ``theta_2 = theta_1 + 2 delta``.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (3,) or abs(eta.sum() - 1.0) > tol or np.any(eta < -tol):
        raise OrderError(f"eta={eta.tolist()} is not a probability vector on 3 outcomes")
    if eta[0] < eta[1] - tol or eta[0] < eta[2] - tol:
        raise OrderError(f"eta={eta.tolist()} violates eta_1 >= eta_2, eta_1 >= eta_3")
    delta = eta[2] - eta[1]
    a = (3.0 - 2.0 * delta) / 2.0
    disc = a * a - 6.0 * eta[1]
    if disc < -tol:
        raise ArithmeticError(f"negative discriminant {disc} for eta={eta.tolist()}")
    t1 = a - np.sqrt(max(disc, 0.0))
    t2 = t1 + 2.0 * delta
    return FreeTheta(np.clip([t1, t2], 0.0, 1.0), "k3-dominant")


def invert_theta(formulas, V: np.ndarray, eta, starts: int = 8, tol: float = 1e-6,
                 d: int | None = None) -> tuple[np.ndarray, float]:
    """Bounded least squares for ``V.T @ lambda(theta) = eta``.

    Starts are taken from a grid in ``(0,1)^d`` in a fixed order; stops at the
    first start reaching ``tol``. Returns (theta, max abs residual).
    """
    eta = np.asarray(eta, dtype=float)
    if d is None:
        d = 1 + max(i for f in formulas for i, _ in f)
    grid = [np.array(p) for p in product((0.3, 0.7), repeat=d)]
    grid = (grid + [np.full(d, 0.5)] * max(0, starts - len(grid)))[:starts]

    def resid(t):
        return V.T @ formula_values(formulas, t) - eta

    def jac(t):
        return V.T @ formula_jacobian(formulas, t)

    best_t, best_r = None, np.inf
    for t0 in grid:
        sol = least_squares(resid, t0, jac=jac, bounds=(0.0, 1.0), method="trf",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=500)
        r = np.abs(resid(sol.x)).max()
        if r < best_r:
            best_t, best_r = sol.x, r
        if best_r < tol * 1e-3:
            break
    return np.clip(best_t, 0.0, 1.0), float(best_r)


# -------------------------------------------------------------- coverage


@dataclass
class CoverageReport:
    pattern: str
    k: int
    samples: int
    seed: int
    tol: float
    method: str
    max_residual: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_residual < self.tol and not self.failures

    def record(self) -> dict:
        return {"pattern": self.pattern, "k": self.k, "samples": self.samples, "seed": self.seed,
                "tol": self.tol, "method": self.method, "max_residual": self.max_residual,
                "passed": self.passed,
                "failures": [{"eta": list(map(float, e)), "residual": r} for e, r in self.failures]}

    def text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.pattern:<12} k={self.k:<2} n={self.samples:<6} {self.method:<12} "
                f"max_residual={self.max_residual:.3e}  {status}")


def _invert_pattern(pat: Pattern, eta) -> tuple[np.ndarray, str]:
    """theta for a point of ``pat``'s polytope (pattern coordinates)."""
    V = np.array([[float(x) for x in v] for v in pat.vertices])
    if pat.name == "linear":
        return stick_inverse(eta_to_lambda(eta, tol=1e-9).values), "closed-form"
    if pat.name == "k3-dominant":
        return solve_theta_k3(eta, tol=1e-9).values, "closed-form"
    if len(pat.vertices) == pat.k:
        lam = np.linalg.solve(V.T, eta)
        lam = np.clip(lam, 0.0, None)
        return stick_inverse(lam / lam.sum()), "unique-lambda"
    theta, _ = invert_theta(pat.formulas, V, eta, d=pat.d)
    return theta, "numerical"


def pattern_eta(pat: Pattern, theta) -> np.ndarray:
    V = np.array([[float(x) for x in v] for v in pat.vertices])
    return V.T @ formula_values(pat.formulas, theta)


def coverage_check(pattern: str, samples: int = 1000, seed: int = 0, tol: float = 1e-6,
                   k: int | None = None) -> CoverageReport:
    """Check numerically that the pattern's theta map reaches its whole polytope."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    pat = get_pattern(pattern, k)
    if pat.formulas is None:
        raise PatternError(VII_NOTE)
    rng = np.random.default_rng(seed)
    draws = sample_polytope(pat.order, samples, rng)
    worst, failures, method = 0.0, [], ""
    for eta in draws:
        theta, method = _invert_pattern(pat, eta)
        r = float(np.abs(pattern_eta(pat, theta) - eta).max())
        worst = max(worst, r)
        if r >= tol:
            failures.append((eta, r))
    return CoverageReport(pat.name, pat.k, samples, seed, tol, method, worst, failures)


# --------------------------------------------------------- branch rewriting

def _substitute(model: MptModel, expansion: Mapping[str, list[tuple[Factor, ...]]]) -> tuple[Branch, ...]:
    out = []
    for b in model.branches:
        options = [expansion.get(f.name, [(f,)]) if not f.is_const else [(f,)] for f in b.factors]
        for combo in product(*options):
            fs = tuple(x for part in combo for x in part)
            out.append(Branch(b.tree, b.category, fs))
    return tuple(out)


def _const(x: Fraction) -> tuple[Factor, ...]:
    return () if x == 1 else (Factor.constant(x),)


def _taken(model: MptModel) -> set[str]:
    return set(model.parameter_names) | {g.name for g in model.groups}


def _swap_group(model: MptModel, old: str, new: Sequence[SimplexGroup]) -> tuple[SimplexGroup, ...]:
    out = []
    for g in model.groups:
        out.extend(new if g.name == old else [g])
    return tuple(out)


def _drop_order(model: MptModel, spec: OrderSpec) -> tuple[OrderSpec, ...]:
    orders = list(model.orders)
    if spec in orders:
        orders.remove(spec)
    return tuple(orders)


# ------------------------------------------------------------------ steps

@dataclass(frozen=True)
class LinearOrderStep:
    group: str
    ranked: tuple[str, ...]           # original members, largest first
    lam_group: str
    lam_members: tuple[str, ...]
    kind: str = "linear"
    identifiable: bool = True

    def forward(self, values: Mapping[str, float]) -> dict[str, float]:
        out = dict(values)
        lam = eta_to_lambda([values[m] for m in self.ranked], tol=1e-9).values
        for m in self.ranked:
            del out[m]
        out.update(zip(self.lam_members, map(float, lam)))
        return out

    def backward(self, values: Mapping[str, float]) -> dict[str, float]:
        out = dict(values)
        eta = lambda_to_eta([values[m] for m in self.lam_members])
        for m in self.lam_members:
            del out[m]
        out.update(zip(self.ranked, map(float, eta)))
        return out


@dataclass(frozen=True)
class SubsetOrderStep:
    group: str
    members: tuple[str, ...]
    split: str                        # binary parameter selecting the ordered block
    ordered: tuple[str, ...]          # original members of the ordered block
    ordered_inner: tuple[str, ...]
    rest: tuple[str, ...]
    rest_inner: tuple[str, ...]       # empty when the rest is a single member
    kind: str = "subset"
    identifiable: bool = True

    def forward(self, values):
        out = dict(values)
        w = sum(values[m] for m in self.ordered)
        blocks = [(self.ordered, self.ordered_inner, w), (self.rest, self.rest_inner, 1.0 - w)]
        for src, dst, mass in blocks:
            if dst:
                if mass > 0:
                    out.update((d, values[s] / mass) for s, d in zip(src, dst))
                else:
                    out.update((d, 1.0 / len(dst)) for d in dst)
        for m in self.members:
            del out[m]
        out[self.split] = min(max(w, 0.0), 1.0)
        return out

    def backward(self, values):
        out = dict(values)
        w = values[self.split]
        for src, dst, mass in [(self.ordered, self.ordered_inner, w),
                               (self.rest, self.rest_inner, 1.0 - w)]:
            if dst:
                out.update((s, mass * values[d]) for s, d in zip(src, dst))
                for d in dst:
                    del out[d]
            else:
                out[src[0]] = mass
        del out[self.split]
        return out


@dataclass(frozen=True)
class PartialOrderStep:
    group: str
    members: tuple[str, ...]
    vertices: tuple[tuple[Fraction, ...], ...]
    mode: str                          # "overparameterized" | "theta"
    pattern: str
    params: tuple[str, ...]            # lambda members or theta names
    permutation: tuple[int, ...] = ()
    kind: str = "partial"

    @property
    def identifiable(self) -> bool:
        return self.mode == "theta"

    def _V(self) -> np.ndarray:
        return np.array([[float(x) for x in v] for v in self.vertices])

    def weights(self, values) -> np.ndarray:
        x = np.array([values[p] for p in self.params])
        if self.mode == "overparameterized":
            return x
        return formula_values(pattern_formulas(self.pattern, len(x)), x)

    def backward(self, values):
        out = dict(values)
        eta = self._V().T @ self.weights(values)
        for p in self.params:
            del out[p]
        out.update(zip(self.members, map(float, eta)))
        return out

    def forward(self, values):
        out = dict(values)
        eta = np.array([values[m] for m in self.members])
        vs = VertexSet(self.vertices, "table")
        if self.mode == "overparameterized":
            x = recover_lambda(vs, eta, tol=1e-9).values
        elif self.pattern == "k3-dominant":
            pat_eta = np.empty(3)
            pat_eta[list(self.permutation)] = eta
            x = solve_theta_k3(pat_eta, tol=1e-9).values
        elif self.pattern in STICK_PATTERNS:
            x = stick_inverse(recover_lambda(vs, eta, tol=1e-9).values)
        else:
            x, r = invert_theta(TABLE2[self.pattern], self._V(), eta)
            if r > 1e-6:
                raise OrderError(f"theta inversion failed for eta={eta.tolist()} (residual {r:.2e})")
        for m in self.members:
            del out[m]
        out.update(zip(self.params, map(float, x)))
        return out


STEP_TYPES = {"linear": LinearOrderStep, "subset": SubsetOrderStep, "partial": PartialOrderStep}


def step_to_dict(step) -> dict:
    d = {}
    for k, v in step.__dict__.items():
        if k == "vertices":
            v = [[str(x) for x in row] for row in v]
        d[k] = v
    return d


def step_from_dict(d: dict):
    d = dict(d)
    cls = STEP_TYPES[d["kind"]]
    if "vertices" in d:
        d["vertices"] = tuple(tuple(Fraction(x) for x in row) for row in d["vertices"])
    for k, v in list(d.items()):
        if isinstance(v, list):
            d[k] = tuple(v)
    d.pop("identifiable", None) if cls is PartialOrderStep else None
    return cls(**d)


# -------------------------------------------------------------- rewrites

def _linear(model: MptModel, spec: OrderSpec) -> tuple[MptModel, LinearOrderStep]:
    if spec.kind != "chain":
        raise OrderError("apply_linear_order needs a chain")
    g = model.group(spec.group)
    if set(spec.members) != set(g.members) or len(spec.members) != g.k:
        raise OrderError(f"chain on {g.name!r} covers only a subset of the group; "
                         "use apply_subset_order")
    taken = _taken(model)
    lam_group = fresh_name(f"{g.name}_lam", taken)
    lam = tuple(fresh_name(f"{g.name}_lam{i + 1}", taken) for i in range(g.k))
    ranked = spec.ranked
    expansion = {}
    for j, m in enumerate(ranked):
        # P(A_j) = sum_{i >= j} lambda_i / i
        expansion[m] = [(Factor.param(lam[i]),) + _const(Fraction(1, i + 1)) for i in range(j, g.k)]
    out = model.replace(groups=_swap_group(model, g.name, [SimplexGroup(lam_group, lam)]),
                        branches=_substitute(model, expansion),
                        orders=_drop_order(model, spec))
    return out, LinearOrderStep(g.name, ranked, lam_group, lam)


def _subset(model: MptModel, spec: OrderSpec) -> tuple[MptModel, list]:
    if spec.kind != "chain":
        raise OrderError("apply_subset_order needs a chain")
    g = model.group(spec.group)
    if not set(spec.members) <= set(g.members):
        raise OrderError(f"chain members not all in group {g.name!r}")
    if set(spec.members) == set(g.members):
        m2, st = _linear(model, spec)
        return m2, [st]
    for other in model.orders:
        if other != spec and other.group == g.name and other.member_set() & spec.member_set():
            raise OrderError(f"overlapping order constraints on group {g.name!r}")
    taken = _taken(model)
    chain_set = set(spec.members)
    ordered = tuple(m for m in g.members if m in chain_set)
    rest = tuple(m for m in g.members if m not in chain_set)
    split = fresh_name(f"{g.name}_split", taken)
    ord_group = fresh_name(f"{g.name}_ord", taken)
    ord_inner = tuple(fresh_name(f"{m}_ord", taken) for m in ordered)
    new_groups = [SimplexGroup(ord_group, ord_inner)]
    rest_inner: tuple[str, ...] = ()
    rest_group = None
    if len(rest) > 1:
        rest_group = fresh_name(f"{g.name}_free", taken)
        rest_inner = tuple(fresh_name(f"{m}_free", taken) for m in rest)
        new_groups.append(SimplexGroup(rest_group, rest_inner))
    expansion = {m: [(Factor.param(split), Factor.param(i))] for m, i in zip(ordered, ord_inner)}
    if rest_inner:
        expansion.update({m: [(Factor.comp(split), Factor.param(i))] for m, i in zip(rest, rest_inner)})
    else:
        expansion[rest[0]] = [(Factor.comp(split),)]
    rename = dict(zip(ordered, ord_inner)) | dict(zip(rest, rest_inner))
    inner_spec = OrderSpec.chain(ord_group, [rename[m] for m in spec.members], spec.direction)
    orders = []
    for o in model.orders:
        if o == spec:
            orders.append(inner_spec)
        elif o.group == g.name:
            # a disjoint chain now lives in the free block
            orders.append(OrderSpec(rest_group, o.kind, tuple(rename[m] for m in o.members),
                                    o.direction, tuple((rename[a], rename[b]) for a, b in o.pairs)))
        else:
            orders.append(o)
    out = model.replace(binary=model.binary + (split,),
                        groups=_swap_group(model, g.name, new_groups),
                        branches=_substitute(model, expansion),
                        orders=tuple(orders))
    step = SubsetOrderStep(g.name, g.members, split, ordered, ord_inner, rest, rest_inner)
    out2, lin = _linear(out, inner_spec)
    return out2, [step, lin]


def _partial(model: MptModel, spec: OrderSpec, mode: str) -> tuple[MptModel, PartialOrderStep]:
    if mode not in ("overparameterized", "theta"):
        raise ValueError(f"unknown mode {mode!r}")
    g = model.group(spec.group)
    others = [o for o in model.orders if o != spec and o.group == g.name]
    if others:
        raise OrderError(f"group {g.name!r} has several order declarations; merge them first")
    order = DominanceOrder.from_labels(g.members, spec.dominance_pairs())
    if not order.is_acyclic():
        raise OrderError(f"order on {g.name!r} is cyclic")
    taken = _taken(model)
    if mode == "overparameterized":
        from .polytope import enumerate_vertices
        verts = enumerate_vertices(order).vertices
        lam_group = fresh_name(f"{g.name}_lam", taken)
        params = tuple(fresh_name(f"{g.name}_lam{i + 1}", taken) for i in range(len(verts)))
        weight_terms = [(Factor.param(p),) for p in params]
        groups = _swap_group(model, g.name, [SimplexGroup(lam_group, params)])
        binary = model.binary
        step = PartialOrderStep(g.name, g.members, verts, mode, "vertices", params)
    else:
        match = identify(order)
        verts = match.vertices.vertices
        d = match.pattern.d
        params = tuple(fresh_name(f"{g.name}_t{i + 1}", taken) for i in range(d))
        weight_terms = [tuple(Factor.comp(params[i]) if c else Factor.param(params[i]) for i, c in f)
                        for f in match.pattern.formulas]
        groups = _swap_group(model, g.name, [])
        binary = model.binary + params
        step = PartialOrderStep(g.name, g.members, verts, mode, match.pattern.name, params,
                                match.permutation)
    expansion = {}
    for pos, m in enumerate(g.members):
        expansion[m] = [w + _const(v[pos]) for w, v in zip(weight_terms, verts) if v[pos] != 0]
    out = model.replace(binary=binary, groups=groups, branches=_substitute(model, expansion),
                        orders=_drop_order(model, spec))
    return out, step


def apply_linear_order(model: MptModel, spec: OrderSpec) -> MptModel:
    """Replace a chain over all members of a group by the vertex-mixture subtree."""
    return _linear(model, spec)[0]


def apply_subset_order(model: MptModel, spec: OrderSpec) -> MptModel:
    """Split a group into an ordered block and a free block, then order the former."""
    return _subset(model, spec)[0]


def apply_partial_order(model: MptModel, spec: OrderSpec, mode: str = "theta") -> MptModel:
    return _partial(model, spec, mode)[0]


# -------------------------------------------------------------- pipeline

@dataclass
class Pipeline:
    """Original model, its rewritten form and the steps between them."""

    original: MptModel
    rewritten: MptModel
    steps: list = field(default_factory=list)
    mode: str = "theta"

    @property
    def identifiable(self) -> bool:
        return all(s.identifiable for s in self.steps)

    def forward(self, params: Mapping[str, float]) -> dict[str, float]:
        values = dict(params)
        for s in self.steps:
            values = s.forward(values)
        return values

    def backward(self, params: Mapping[str, float]) -> dict[str, float]:
        values = dict(params)
        for s in reversed(self.steps):
            values = s.backward(values)
        return {n: values[n] for n in self.original.parameter_names}

    def constrained_groups(self) -> dict[str, tuple[str, ...]]:
        return {o.group: self.original.group(o.group).members for o in self.original.orders}

    def manifest(self) -> dict:
        from . import __version__
        from .dsl import serialize_model
        return {"format": "mptorder-manifest/1", "version": __version__, "mode": self.mode,
                "original": serialize_model(self.original),
                "rewritten": serialize_model(self.rewritten),
                "steps": [step_to_dict(s) for s in self.steps]}

    def write_manifest(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_manifest(cls, data: dict) -> "Pipeline":
        from .dsl import parse_model
        return cls(parse_model(data["original"]), parse_model(data["rewritten"]),
                   [step_from_dict(s) for s in data["steps"]], data.get("mode", "theta"))

    @classmethod
    def read_manifest(cls, path) -> "Pipeline":
        with open(path, encoding="utf-8") as fh:
            return cls.from_manifest(json.load(fh))


def transform_model(model: MptModel, mode: str = "theta") -> Pipeline:
    """Rewrite every order declaration; the result carries no order constraints.

    Chains are rewritten exactly (full-group or subset). Groups with a partial
    order have all their declarations merged into one partial order.
    """
    ensure_valid(model)
    current, steps = model, []
    while current.orders:
        spec = current.orders[0]
        same = [o for o in current.orders if o.group == spec.group]
        if all(o.kind == "chain" for o in same):
            current, new = _subset(current, spec)
            steps.extend(new)
        else:
            pairs = tuple(p for o in same for p in o.dominance_pairs())
            merged = OrderSpec.partial(spec.group, pairs)
            stripped = current.replace(orders=tuple(o for o in current.orders if o not in same) + (merged,))
            current, st = _partial(stripped, merged, mode)
            steps.append(st)
    ensure_valid(current)
    return Pipeline(model, current, steps, mode)


def eta_of(pipeline: Pipeline, rewritten_params: Mapping[str, float]) -> dict[str, np.ndarray]:
    """Implied constrained-group points (declared member order) for rewritten parameters."""
    orig = pipeline.backward(rewritten_params)
    return {g: np.array([orig[m] for m in members])
            for g, members in pipeline.constrained_groups().items()}
