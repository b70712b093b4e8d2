"""Binary-MPT conversion and a vectorized evaluator for binary models."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .config import TOL
from .errors import ModelError
from .model import Branch, Factor, MptModel, ensure_valid


def fresh_name(base: str, taken: set[str]) -> str:
    name, i = base, 1
    while name in taken:
        i += 1
        name = f"{base}_{i}"
    taken.add(name)
    return name


def stick_break(values: Sequence[float]) -> list[float]:
    """Simplex point -> k-1 conditional probabilities.

    A zero remainder makes later betas undefined; they are set to 0.
    """
    betas, rest = [], 1.0
    for v in values[:-1]:
        b = v / rest if rest > 0 else 0.0
        betas.append(min(max(b, 0.0), 1.0))
        rest -= v
    return betas


def stick_join(betas: Sequence[float]) -> list[float]:
    out, rest = [], 1.0
    for b in betas:
        out.append(rest * b)
        rest *= 1.0 - b
    out.append(rest)
    return out


@dataclass(frozen=True)
class BinaryTransform:
    """Stick-breaking record: for every group, its members and the binary
    parameters replacing them (member order as declared)."""

    groups: tuple[tuple[str, tuple[str, ...], tuple[str, ...]], ...]

    def to_binary(self, params: Mapping[str, float]) -> dict[str, float]:
        out = dict(params)
        for _, members, betas in self.groups:
            out.update(zip(betas, stick_break([params[m] for m in members])))
            for m in members:
                del out[m]
        return out

    def from_binary(self, params: Mapping[str, float]) -> dict[str, float]:
        out = dict(params)
        for _, members, betas in self.groups:
            out.update(zip(members, stick_join([params[b] for b in betas])))
            for b in betas:
                del out[b]
        return out

    def to_dict(self) -> dict:
        return {"groups": [{"group": g, "members": list(m), "binary": list(b)}
                           for g, m, b in self.groups]}


@dataclass(frozen=True)
class BinaryConversion:
    model: MptModel
    transform: BinaryTransform


def to_binary(model: MptModel) -> BinaryConversion:
    """Replace every simplex group by a stick-breaking chain of binary parameters.

    Member j of a group of size k becomes ``(1-b1)...(1-b_j-1) * b_j`` (the last
    member has no trailing ``b``). The induced distribution does not depend on
    member order, but the identity of the new parameters does.
    """
    if model.orders:
        raise ModelError("model still carries order constraints; rewrite them first")
    ensure_valid(model)
    taken = set(model.parameter_names) | {g.name for g in model.groups}
    expansion: dict[str, tuple[Factor, ...]] = {}
    records = []
    binary = list(model.binary)
    for g in model.groups:
        betas = tuple(fresh_name(f"{g.name}_b{j + 1}", taken) for j in range(g.k - 1))
        binary.extend(betas)
        records.append((g.name, g.members, betas))
        for j, m in enumerate(g.members):
            fs = [Factor.comp(b) for b in betas[:j]]
            if j < g.k - 1:
                fs.append(Factor.param(betas[j]))
            expansion[m] = tuple(fs)
    branches = []
    for b in model.branches:
        fs: list[Factor] = []
        for f in b.factors:
            fs.extend(expansion.get(f.name, (f,)) if not f.is_const else (f,))
        branches.append(Branch(b.tree, b.category, tuple(fs)))
    out = MptModel(binary=tuple(binary), groups=(), trees=model.trees, branches=tuple(branches))
    return BinaryConversion(out, BinaryTransform(tuple(records)))


class CompiledModel:
    """Array form of a binary model: branch b has probability
    ``const_b * prod_i theta_i**A[b,i] * (1-theta_i)**C[b,i]``.

    All evaluation methods accept ``theta`` with shape ``(..., d)``.
    """

    def __init__(self, model: MptModel):
        if model.groups or model.orders:
            raise ModelError("CompiledModel needs a binary model (see to_binary)")
        self.model = model
        self.names = tuple(model.binary)
        self.d = len(self.names)
        self.keys = [(t.name, c) for t in model.trees for c in t.categories]
        cat_index = {k: i for i, k in enumerate(self.keys)}
        self.tree_slices = {}
        start = 0
        for t in model.trees:
            self.tree_slices[t.name] = slice(start, start + len(t.categories))
            start += len(t.categories)
        self.cat_tree = np.concatenate([
            np.full(len(t.categories), i) for i, t in enumerate(model.trees)])
        pidx = {n: i for i, n in enumerate(self.names)}
        nb = len(model.branches)
        self.A = np.zeros((nb, self.d), dtype=int)
        self.C = np.zeros((nb, self.d), dtype=int)
        self.const = np.ones(nb)
        self.branch_cat = np.empty(nb, dtype=int)
        for bi, b in enumerate(model.branches):
            self.branch_cat[bi] = cat_index[(b.tree, b.category)]
            for f in b.factors:
                if f.is_const:
                    self.const[bi] *= float(f.const)
                elif f.complement:
                    self.C[bi, pidx[f.name]] += 1
                else:
                    self.A[bi, pidx[f.name]] += 1
        # factor columns of [theta, 1 - theta, 1]; pads point at the constant column
        width = max(int((self.A + self.C).sum(axis=1).max(initial=0)), 1)
        self._idx = np.full((nb, width), 2 * self.d, dtype=int)
        for bi in range(nb):
            cols = [i for i in range(self.d) for _ in range(self.A[bi, i])]
            cols += [self.d + i for i in range(self.d) for _ in range(self.C[bi, i])]
            self._idx[bi, :len(cols)] = cols
        self.M = np.zeros((nb, len(self.keys)))
        self.M[np.arange(nb), self.branch_cat] = 1.0
        self._AC = self.A + self.C

    @property
    def n_categories(self) -> int:
        return len(self.keys)

    def vector(self, params: Mapping[str, float]) -> np.ndarray:
        return np.array([params[n] for n in self.names], dtype=float)

    def assignment(self, theta) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, theta)}

    def branch_probs(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        X = np.concatenate([t, 1.0 - t, np.ones(t.shape[:-1] + (1,))], axis=-1)
        return self.const * X[..., self._idx].prod(axis=-1)

    def probs(self, theta) -> np.ndarray:
        return self.branch_probs(theta) @ self.M

    def tree_probs(self, theta) -> dict[str, np.ndarray]:
        p = self.probs(theta)
        return {t: p[..., s] for t, s in self.tree_slices.items()}

    def jacobian(self, theta) -> np.ndarray:
        """Exact derivative of category probabilities, shape (..., C, d)."""
        t = np.asarray(theta, dtype=float)[..., None, :]
        A, C = self.A, self.C
        f = t ** A * (1.0 - t) ** C
        da = np.where(A > 0, A * t ** np.maximum(A - 1, 0), 0.0) * (1.0 - t) ** C
        dc = np.where(C > 0, C * (1.0 - t) ** np.maximum(C - 1, 0), 0.0) * t ** A
        g = da - dc
        ones = np.ones(f.shape[:-1] + (1,))
        pre = np.concatenate([ones, np.cumprod(f[..., :-1], axis=-1)], axis=-1)
        rev = np.cumprod(f[..., ::-1], axis=-1)[..., ::-1]
        suf = np.concatenate([rev[..., 1:], ones], axis=-1)
        db = self.const[:, None] * pre * suf * g
        return np.einsum("...bd,bc->...cd", db, self.M)

    def loglik_kernel(self, theta, counts) -> np.ndarray:
        p = np.maximum(self.probs(theta), TOL.prob_floor)
        return (np.asarray(counts) * np.log(p)).sum(axis=-1)

    def score(self, theta, counts) -> np.ndarray:
        p = np.maximum(self.probs(theta), TOL.prob_floor)
        J = self.jacobian(theta)
        return np.einsum("...c,...cd->...d", np.asarray(counts) / p, J)

    def em_step(self, theta, counts) -> np.ndarray:
        """One EM update on a batch of parameter vectors, shape (S, d)."""
        counts = np.asarray(counts, dtype=float)
        pb = self.branch_probs(theta)
        pc = pb @ self.M
        denom = pc[..., self.branch_cat]
        w = np.divide(counts[self.branch_cat] * pb, denom,
                      out=np.zeros_like(pb), where=denom > 0)
        num = w @ self.A
        den = w @ self._AC
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), theta)


def compile_model(model: MptModel) -> tuple[CompiledModel, BinaryTransform]:
    conv = to_binary(model)
    return CompiledModel(conv.model), conv.transform
