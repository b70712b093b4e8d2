"""Fisher information, the FIA penalty, and model comparison by G², FIA, BIC
and AIC.

FIA = -ln L(theta_hat) + (d/2) ln(N / 2 pi) + ln \\int sqrt(det I(theta)) dtheta,
with ``I`` the expected information of one observation whose tree is drawn
with the given tree weights. The integral runs over the unit cube of the
binary form of the (rewritten) model and is estimated by plain Monte Carlo.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .binary import CompiledModel, compile_model
from .config import DEFAULT_MC_SAMPLES, DEFAULT_STARTS, FISHER_STEP, TOL
from .data import Dataset
from .errors import FitError, ModelError, MptError, ParamError
from .estimation import fit
from .model import MptModel, category_probabilities, check_params

MAX_REJECT_RATE = 0.01
CHUNK = 20_000


def _weights(model: MptModel, tree_weights: Mapping[str, float] | None) -> dict[str, float]:
    if tree_weights is None:
        return {t.name: 1.0 / len(model.trees) for t in model.trees}
    w = {t.name: float(tree_weights[t.name]) for t in model.trees}
    if any(v < 0 for v in w.values()) or abs(sum(w.values()) - 1.0) > 1e-9:
        raise ParamError("tree weights must be nonnegative and sum to 1")
    return w


def information_coordinates(model: MptModel) -> tuple[str, ...]:
    """Free coordinates: binary parameters, then all but the last member of each group."""
    return tuple(model.binary) + tuple(m for g in model.groups for m in g.members[:-1])


def fisher_information(model: MptModel, params: Mapping[str, float],
                       tree_weights: Mapping[str, float] | None = None,
                       step: float = FISHER_STEP) -> np.ndarray:
    """Expected information of one observation, by central differences.

    Coordinates are given by :func:`information_coordinates`; the last member
    of each simplex group is one minus the others.
    """
    check_params(model, params)
    eps = TOL.interior
    if any(not eps < v < 1 - eps for v in params.values()):
        raise ParamError("Fisher information needs interior parameters")
    w = _weights(model, tree_weights)
    coords = information_coordinates(model)
    lasts = {g.members[-1]: g for g in model.groups}

    def probs(x: np.ndarray) -> np.ndarray:
        vals = dict(params)
        vals.update(zip(coords, x))
        for last, g in lasts.items():
            vals[last] = 1.0 - sum(vals[m] for m in g.members[:-1])
        p = category_probabilities(model, vals, check=False)
        return np.array([p[t.name][c] for t in model.trees for c in t.categories])

    x0 = np.array([params[c] for c in coords], dtype=float)
    p0 = probs(x0)
    if np.any(p0 <= 0):
        raise ParamError("a category has zero probability at the evaluation point")
    D = np.empty((len(p0), len(coords)))
    for i in range(len(coords)):
        e = np.zeros(len(coords))
        e[i] = step
        D[:, i] = (probs(x0 + e) - probs(x0 - e)) / (2 * step)
    wc = np.array([w[t.name] for t in model.trees for _ in t.categories])
    info = (D.T * (wc / p0)) @ D
    return (info + info.T) / 2.0


def binary_information(cm: CompiledModel, theta, weights: np.ndarray,
                       step: float = FISHER_STEP) -> np.ndarray:
    """Batched information on the binary form; theta has shape (S, d)."""
    theta = np.asarray(theta, dtype=float)
    p = cm.probs(theta)
    d = cm.d
    D = np.empty(p.shape + (d,))
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        D[..., i] = (cm.probs(theta + e) - cm.probs(theta - e)) / (2 * step)
    wc = weights[cm.cat_tree]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.einsum("sc,scd,sce->sde", wc / p, D, D)


@dataclass
class FiaResult:
    dimension_term: float
    geometry_term: float
    mc_error: float
    fia: float
    samples: int
    seed: int
    d: int
    N: int
    rejected: int = 0
    log_likelihood: float | None = None

    @property
    def penalty(self) -> float:
        return self.dimension_term + self.geometry_term

    def record(self) -> dict:
        return {"dimension_term": self.dimension_term, "geometry_term": self.geometry_term,
                "mc_error": self.mc_error, "penalty": self.penalty, "fia": self.fia,
                "log_likelihood": self.log_likelihood, "samples": self.samples,
                "seed": self.seed, "d": self.d, "N": self.N, "rejected": self.rejected}

    def text(self) -> str:
        lines = [f"d = {self.d}  N = {self.N}  samples = {self.samples}  rejected = {self.rejected}",
                 f"dimension term = {self.dimension_term:.6f}",
                 f"geometry term  = {self.geometry_term:.6f} +/- {self.mc_error:.6f}",
                 f"penalty        = {self.penalty:.6f}"]
        if self.log_likelihood is not None:
            lines.append(f"FIA            = {self.fia:.6f}")
        return "\n".join(lines)


@lru_cache(maxsize=64)
def _geometry(model: MptModel, weights: tuple[float, ...], samples: int, seed: int,
              threads: int) -> tuple[float, float, int]:
    cm, _ = compile_model(model)
    w = np.asarray(weights)
    eps = TOL.interior
    sizes = [min(CHUNK, samples - s) for s in range(0, samples, CHUNK)]

    def chunk(c: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        theta = np.clip(rng.random((sizes[c], cm.d)), eps, 1 - eps)
        det = np.linalg.det(binary_information(cm, theta, w))
        ok = np.isfinite(det)
        v = np.sqrt(np.clip(det[ok], 0.0, None))
        return v.sum(), (v * v).sum(), int(ok.sum())

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(chunk, range(len(sizes))))
    else:
        parts = [chunk(c) for c in range(len(sizes))]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    n = sum(p[2] for p in parts)
    rejected = samples - n
    if n == 0 or rejected > MAX_REJECT_RATE * samples:
        raise MptError(f"{rejected} of {samples} Monte Carlo draws gave a non-finite determinant")
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
    # delta method: se(ln mean) = se(mean) / mean
    return float(np.log(mean)), float(np.sqrt(var / n) / mean), rejected


def fia_penalty(model: MptModel, tree_weights: Mapping[str, float] | None = None, N: int = 1,
                mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                log_likelihood: float | None = None, threads: int = 1) -> FiaResult:
    """FIA penalty of a model without order declarations.

    With ``log_likelihood`` (the maximized value) the returned ``fia`` adds
    its negative; otherwise ``fia`` equals the penalty.
    """
    if model.orders:
        raise ModelError("model still carries order constraints; transform it first")
    if N < 1:
        raise ValueError("N must be >= 1")
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    w = _weights(model, tree_weights)
    cm, _ = compile_model(model)
    d = cm.d
    geom, err, rejected = _geometry(model, tuple(w[t.name] for t in model.trees),
                                    int(mc_samples), int(seed), max(1, int(threads)))
    dim = 0.5 * d * np.log(N / (2 * np.pi))
    fia = dim + geom - (log_likelihood if log_likelihood is not None else 0.0)
    return FiaResult(float(dim), geom, err, float(fia), int(mc_samples), int(seed), d, int(N),
                     rejected, log_likelihood)


# ------------------------------------------------------------------ compare

INDICES = ("g_squared", "fia", "bic", "aic")


@dataclass
class CompareSettings:
    starts: int = DEFAULT_STARTS
    seed: int = 0
    mc_samples: int = DEFAULT_MC_SAMPLES
    tree_weights: Mapping[str, float] | None = None
    mode: str = "theta"
    threads: int = 1


@dataclass
class ComparisonRow:
    name: str
    d: int | None = None
    df: int | None = None
    log_likelihood: float | None = None
    g_squared: float | None = None
    geometry_term: float | None = None
    fia: float | None = None
    bic: float | None = None
    aic: float | None = None
    error: str | None = None


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    preferred: dict[str, list[str]] = field(default_factory=dict)
    fia_threshold: float | None = None

    def ties(self) -> dict[str, bool]:
        return {k: len(v) > 1 for k, v in self.preferred.items()}

    def record(self) -> dict:
        return {"rows": [r.__dict__ for r in self.rows], "preferred": self.preferred,
                "ties": self.ties(), "fia_threshold": self.fia_threshold}

    def text(self) -> str:
        width = max([len(r.name) for r in self.rows] + [5])
        head = f"{'model':<{width}}  {'d':>3}  {'G2':>12}  {'FIA':>12}  {'BIC':>12}  {'AIC':>12}"
        lines = [head]

        def cell(v):
            return f"{'n/a':>12}" if v is None else f"{v:12.4f}"

        for r in self.rows:
            d = "n/a" if r.d is None else str(r.d)
            lines.append(f"{r.name:<{width}}  {d:>3}  {cell(r.g_squared)}  {cell(r.fia)}  "
                         f"{cell(r.bic)}  {cell(r.aic)}")
        for k, names in self.preferred.items():
            tie = " (tie)" if len(names) > 1 else ""
            lines.append(f"preferred by {k}: {', '.join(names)}{tie}")
        if self.fia_threshold is not None:
            lines.append(f"FIA decision margin (2 x geometry gap): {self.fia_threshold:.4f}")
        for r in self.rows:
            if r.error:
                lines.append(f"{r.name}: unavailable ({r.error})")
        return "\n".join(lines)


def _argmin_names(rows: Sequence[ComparisonRow], key: str, tol: float = 1e-9) -> list[str]:
    vals = [(getattr(r, key), r.name) for r in rows if getattr(r, key) is not None]
    if not vals:
        return []
    best = min(v for v, _ in vals)
    return [n for v, n in vals if v - best <= tol * max(1.0, abs(best))]


def compare(models: Mapping[str, MptModel], data: Dataset,
            settings: CompareSettings | None = None) -> ComparisonReport:
    """Fit every model and tabulate G², FIA, BIC and AIC.

    Models with order declarations are rewritten first.
    """
    from .reparam import transform_model

    settings = settings or CompareSettings()
    rows = []
    for name, model in models.items():
        row = ComparisonRow(name)
        try:
            rewritten = transform_model(model, settings.mode).rewritten if model.orders else model
            res = fit(rewritten, data, starts=settings.starts, seed=settings.seed)
            N = int(sum(data.totals().values()))
            f = fia_penalty(rewritten, settings.tree_weights, N, settings.mc_samples,
                            settings.seed, res.log_likelihood, settings.threads)
            d = f.d
            row = ComparisonRow(name, d, res.df, res.log_likelihood, res.g_squared,
                                f.geometry_term, f.fia,
                                -2 * res.log_likelihood + d * np.log(N),
                                -2 * res.log_likelihood + 2 * d)
        except (MptError, FitError, ValueError) as e:
            row.error = str(e)
        rows.append(row)
    preferred = {k: _argmin_names(rows, k) for k in INDICES}
    geoms = [r.geometry_term for r in rows if r.geometry_term is not None]
    threshold = 2 * (max(geoms) - min(geoms)) if len(geoms) >= 2 else None
    return ComparisonReport(rows, preferred, threshold)
