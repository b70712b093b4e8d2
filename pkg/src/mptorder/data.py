"""Category count data: CSV I/O and multinomial simulation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ModelError, MptError
from .model import MptModel, category_probabilities, check_params


@dataclass(frozen=True)
class Dataset:
    """Counts per tree and category."""

    counts: dict[str, dict[str, int]]

    def totals(self) -> dict[str, int]:
        return {t: sum(c.values()) for t, c in self.counts.items()}

    def check(self, model: MptModel) -> None:
        expected = {(t.name, c) for t in model.trees for c in t.categories}
        got = {(t, c) for t, cats in self.counts.items() for c in cats}
        if expected != got:
            missing = sorted(expected - got)
            extra = sorted(got - expected)
            parts = []
            if missing:
                parts.append("missing " + ", ".join(f"{t}/{c}" for t, c in missing))
            if extra:
                parts.append("unexpected " + ", ".join(f"{t}/{c}" for t, c in extra))
            raise ModelError("data do not match model categories: " + "; ".join(parts))

    def vector(self, model: MptModel) -> np.ndarray:
        """Counts aligned with the model's (tree, category) declaration order."""
        self.check(model)
        return np.array([self.counts[t.name][c] for t in model.trees for c in t.categories],
                        dtype=float)

    @classmethod
    def from_vector(cls, model: MptModel, vec) -> "Dataset":
        it = iter(vec)
        return cls({t.name: {c: int(next(it)) for c in t.categories} for t in model.trees})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tree", "category", "count"])
        for t, cats in self.counts.items():
            for c, n in cats.items():
                w.writerow([t, c, n])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [h.strip() for h in rows[0]] != ["tree", "category", "count"]:
            raise MptError("data CSV must start with header 'tree,category,count'")
        counts: dict[str, dict[str, int]] = {}
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) != 3:
                raise MptError(f"line {lineno}: expected 3 fields, got {len(row)}")
            t, c, n = (x.strip() for x in row)
            try:
                value = int(n)
            except ValueError:
                raise MptError(f"line {lineno}: count {n!r} is not an integer") from None
            if value < 0:
                raise MptError(f"line {lineno}: negative count")
            if c in counts.setdefault(t, {}):
                raise MptError(f"line {lineno}: duplicate entry {t}/{c}")
            counts[t][c] = value
        return cls(counts)

    @classmethod
    def read(cls, path) -> "Dataset":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def _n_map(model: MptModel, n_per_tree) -> dict[str, int]:
    if isinstance(n_per_tree, Mapping):
        n = {t.name: int(n_per_tree[t.name]) for t in model.trees}
    else:
        n = {t.name: int(n_per_tree) for t in model.trees}
    if any(v < 1 for v in n.values()):
        raise MptError("sample size per tree must be >= 1")
    return n


def draw_counts(tree_probs: Mapping[str, np.ndarray], n: Mapping[str, int],
                rng: np.random.Generator) -> dict[str, np.ndarray]:
    out = {}
    for t, p in tree_probs.items():
        p = np.clip(np.asarray(p, dtype=float), 0.0, None)
        out[t] = rng.multinomial(n[t], p / p.sum())
    return out


def simulate(model: MptModel, params: Mapping[str, float], n_per_tree, seed: int) -> Dataset:
    """Multinomial draws per tree; identical output for identical seed."""
    check_params(model, params)
    n = _n_map(model, n_per_tree)
    probs = category_probabilities(model, params, check=False)
    rng = np.random.default_rng(seed)
    tree_probs = {t.name: np.array([probs[t.name][c] for c in t.categories]) for t in model.trees}
    drawn = draw_counts(tree_probs, n, rng)
    return Dataset({t.name: dict(zip(t.categories, map(int, drawn[t.name]))) for t in model.trees})
