"""Order polytopes on the probability simplex.

The set of distributions ``eta`` on ``k`` outcomes satisfying ``eta_i >= eta_j``
for every pair of a dominance order is a polytope. Its vertices are uniform
distributions on up-closed member sets; candidates that are convex
combinations of other candidates are pruned with an exact rational LP.
Indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog, nnls

from .config import MAX_POLYTOPE_K, TOL
from .errors import InfeasibleError, OrderError


@dataclass(frozen=True)
class DominanceOrder:
    """``pairs`` holds ``(i, j)`` meaning ``eta_i >= eta_j``."""

    k: int
    pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(i), int(j)) for i, j in self.pairs))
        for i, j in self.pairs:
            if not (0 <= i < self.k and 0 <= j < self.k):
                raise OrderError(f"pair ({i}, {j}) out of range for k={self.k}")
            if i == j:
                raise OrderError(f"pair ({i}, {j}) relates a member to itself")

    @classmethod
    def from_labels(cls, labels: Sequence[str], pairs) -> "DominanceOrder":
        idx = {x: n for n, x in enumerate(labels)}
        try:
            return cls(len(labels), tuple((idx[a], idx[b]) for a, b in pairs))
        except KeyError as e:
            raise OrderError(f"unknown member {e.args[0]!r}") from None

    @classmethod
    def chain(cls, k: int) -> "DominanceOrder":
        return cls(k, tuple((i, i + 1) for i in range(k - 1)))

    def is_acyclic(self) -> bool:
        succ = {i: set() for i in range(self.k)}
        for i, j in self.pairs:
            succ[i].add(j)
        indeg = [0] * self.k
        for i in succ:
            for j in succ[i]:
                indeg[j] += 1
        queue = [i for i in range(self.k) if indeg[i] == 0]
        seen = 0
        while queue:
            u = queue.pop()
            seen += 1
            for v in succ[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue.append(v)
        return seen == self.k

    def is_up_set(self, members: frozenset[int]) -> bool:
        return all(i in members for i, j in self.pairs if j in members)


@dataclass(frozen=True)
class VertexSet:
    vertices: tuple[tuple[Fraction, ...], ...]
    provenance: str = "enumerated"

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def k(self) -> int:
        return len(self.vertices[0])

    def as_array(self) -> np.ndarray:
        return np.array([[float(x) for x in v] for v in self.vertices])

    def as_set(self) -> frozenset:
        return frozenset(self.vertices)


@dataclass(frozen=True)
class MixtureWeights:
    values: np.ndarray
    unique: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < -TOL.algebraic) or abs(v.sum() - 1.0) > TOL.algebraic:
            raise ValueError(f"mixture weights must be >= 0 and sum to 1, got {v}")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return len(self.values)


# ------------------------------------------------------- exact feasibility LP

def exact_feasible(A: Sequence[Sequence[Fraction]], b: Sequence[Fraction]) -> list[Fraction] | None:
    """Solve ``A x = b, x >= 0`` exactly (phase-I simplex, Bland's rule).

    Returns a feasible ``x`` or ``None``.
    """
    m = len(A)
    n = len(A[0]) if m else 0
    T = []
    for i in range(m):
        row = [Fraction(x) for x in A[i]]
        rhs = Fraction(b[i])
        if rhs < 0:
            row, rhs = [-x for x in row], -rhs
        T.append(row + [Fraction(int(r == i)) for r in range(m)] + [rhs])
    basis = [n + i for i in range(m)]
    width = n + m
    # reduced costs of the phase-I objective (sum of artificials)
    cost = [-sum(T[i][j] for i in range(m)) for j in range(n)] + [Fraction(0)] * m
    value = sum(T[i][-1] for i in range(m))
    while True:
        enter = next((j for j in range(width) if cost[j] < 0), None)
        if enter is None:
            break
        best = None
        for i in range(m):
            a = T[i][enter]
            if a > 0:
                ratio = T[i][-1] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:  # unbounded direction; cannot happen for phase I
            break
        r = best[1]
        piv = T[r][enter]
        T[r] = [x / piv for x in T[r]]
        for i in range(m):
            if i != r and T[i][enter] != 0:
                f = T[i][enter]
                T[i] = [x - f * y for x, y in zip(T[i], T[r])]
        f = cost[enter]
        cost = [c - f * y for c, y in zip(cost, T[r][:width])]
        value += f * T[r][-1]
        basis[r] = enter
    if value != 0:
        return None
    x = [Fraction(0)] * n
    for i, j in enumerate(basis):
        if j < n:
            x[j] = T[i][-1]
    return x


def in_convex_hull(point: Sequence[Fraction], others: Sequence[Sequence[Fraction]]) -> bool:
    if not others:
        return False
    k = len(point)
    A = [[v[r] for v in others] for r in range(k)] + [[Fraction(1)] * len(others)]
    return exact_feasible(A, list(point) + [Fraction(1)]) is not None


# ------------------------------------------------------------------ vertices

def _sort_key(v):
    return (sum(1 for x in v if x != 0), tuple(-x for x in v))


def enumerate_vertices(order: DominanceOrder) -> VertexSet:
    """Extreme points of the order polytope, as exact fractions.

    Sorted by support size, then lexicographically with larger entries first.
    """
    k = order.k
    if k > MAX_POLYTOPE_K:
        raise OrderError(f"k={k} exceeds the desk-scale limit of {MAX_POLYTOPE_K}")
    if k < 1:
        raise OrderError("need k >= 1")
    if not order.is_acyclic():
        raise OrderError("dominance order is cyclic")
    supports = []
    for mask in range(1, 1 << k):
        s = frozenset(i for i in range(k) if mask >> i & 1)
        if order.is_up_set(s):
            supports.append(s)
    cands = {s: tuple(Fraction(1, len(s)) if i in s else Fraction(0) for i in range(k))
             for s in supports}
    kept = []
    for s, v in cands.items():
        # only points supported inside s can combine to v
        inner = [w for t, w in cands.items() if t < s]
        if not in_convex_hull(v, inner):
            kept.append(v)
    return VertexSet(tuple(sorted(kept, key=_sort_key)), "enumerated")


def membership(order: DominanceOrder, eta, tol: float = TOL.algebraic) -> bool:
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (order.k,):
        raise ValueError(f"expected {order.k} probabilities")
    if abs(eta.sum() - 1.0) > tol:
        raise ValueError("eta must sum to 1")
    if np.any(eta < -tol):
        return False
    return all(eta[i] >= eta[j] - tol for i, j in order.pairs)


# ---------------------------------------------------------- mixture weights

def _maxent(Vf: np.ndarray, eta: np.ndarray, tol: float = 1e-14, max_iter: int = 200) -> np.ndarray:
    """Maximum-entropy weights over the rows of Vf reproducing eta (dual Newton)."""
    m = Vf.shape[0]
    if m == 1:
        return np.ones(1)
    mu = np.zeros(Vf.shape[1])

    def weights(mu):
        z = Vf @ mu
        w = np.exp(z - z.max())
        return w / w.sum()

    def objective(mu):
        z = Vf @ mu
        return z.max() + np.log(np.exp(z - z.max()).sum()) - mu @ eta

    for _ in range(max_iter):
        lam = weights(mu)
        mean = Vf.T @ lam
        grad = mean - eta
        if np.abs(grad).max() < tol:
            break
        H = (Vf.T * lam) @ Vf - np.outer(mean, mean)
        step = np.linalg.lstsq(H, -grad, rcond=1e-13)[0]
        f0, t = objective(mu), 1.0
        while t > 1e-10 and objective(mu + t * step) > f0 + 1e-4 * t * (grad @ step):
            t *= 0.5
        if t <= 1e-10:
            break
        mu = mu + t * step
    return weights(mu)


def recover_lambda(vertices: VertexSet, eta, tol: float = 1e-10) -> MixtureWeights:
    """Mixture weights over ``vertices`` reproducing ``eta``.

    Weights are unique when there are ``k`` affinely independent vertices. Otherwise the
    maximum-entropy solution is returned and flagged non-unique.
    """
    eta = np.asarray(eta, dtype=float)
    V = vertices.as_array()
    m, k = V.shape
    if m == k and np.linalg.matrix_rank(V) == k:
        lam = np.linalg.solve(V.T, eta)
        if lam.min() < -tol or np.abs(V.T @ lam - eta).max() > tol:
            raise InfeasibleError(f"eta={eta.tolist()} lies outside the polytope")
        lam = np.clip(lam, 0.0, None)
        return MixtureWeights(lam / lam.sum(), unique=True)

    A = np.vstack([V.T, np.ones(m)])
    rhs = np.append(eta, 1.0)
    lam0, _ = nnls(A, rhs)
    if np.abs(A @ lam0 - rhs).max() > tol:
        raise InfeasibleError(f"eta={eta.tolist()} lies outside the polytope")
    target = V.T @ lam0
    # vertices of the minimal face containing eta: those that can carry weight
    face = []
    for v in range(m):
        c = np.zeros(m)
        c[v] = -1.0
        res = linprog(c, A_eq=A, b_eq=np.append(target, 1.0), bounds=(0, None), method="highs")
        if res.status == 0 and -res.fun > 1e-9:
            face.append(v)
    if not face:
        face = list(np.flatnonzero(lam0 > 0))
    lam = np.zeros(m)
    lam[face] = _maxent(V[face], eta)
    if np.abs(V.T @ lam - eta).max() > tol:
        lam = lam0
    lam = np.clip(lam, 0.0, None)
    return MixtureWeights(lam / lam.sum(), unique=False)


def mixture_point(vertices: VertexSet, lam) -> np.ndarray:
    return vertices.as_array().T @ np.asarray(lam, dtype=float)


def sample_polytope(order: DominanceOrder, n: int, rng: np.random.Generator,
                    max_tries: int = 1_000_000) -> np.ndarray:
    """Uniform draws from the order polytope by rejection from Dirichlet(1,...,1)."""
    out = []
    tries = 0
    batch = max(64, 4 * n)
    while len(out) < n:
        if tries > max_tries:
            raise OrderError("rejection sampler acceptance rate too low")
        x = rng.dirichlet(np.ones(order.k), size=batch)
        tries += batch
        ok = np.ones(batch, dtype=bool)
        for i, j in order.pairs:
            ok &= x[:, i] >= x[:, j]
        out.extend(x[ok])
    return np.array(out[:n])


def format_vertices(vs: VertexSet) -> str:
    return "\n".join(" ".join(str(x) for x in v) for v in vs.vertices)


def pairs_to_text(pairs, labels: Sequence[str]) -> str:
    return ", ".join(f"{labels[i]}>={labels[j]}" for i, j in pairs)


__all__ = [
    "DominanceOrder", "VertexSet", "MixtureWeights", "enumerate_vertices", "membership",
    "recover_lambda", "mixture_point", "sample_polytope", "exact_feasible", "in_convex_hull",
    "format_vertices",
]
