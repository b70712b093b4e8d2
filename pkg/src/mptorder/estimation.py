"""Maximum likelihood for MPT models, G², delta-method standard errors and
the parametric bootstrap of G².

Fitting runs EM on the binary form of the model from several random starts
at once, then polishes the best start with bounded L-BFGS-B.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .binary import BinaryTransform, CompiledModel, compile_model
from .config import DEFAULT_STARTS, DELTA_STEP, START_HIGH, START_LOW, TOL
from .data import Dataset, draw_counts
from .errors import FitError, ModelError
from .model import MptModel

BOUNDARY = 1e-6      # binary estimates closer than this to 0 or 1 are on the boundary
GRAD_TOL = 1e-6      # projected gradient norm of the mean log-likelihood
EM_TOL = 1e-10
EM_MAX_ITER = 20_000
MAX_DROP_RATE = 0.05


def g_squared(counts, probs, slices: Mapping[str, slice]) -> float:
    """2 sum n ln(n / (N p)) with 0 ln 0 = 0 and a floor on p."""
    counts = np.asarray(counts, dtype=float)
    p = np.maximum(np.asarray(probs, dtype=float), TOL.prob_floor)
    total = 0.0
    for s in slices.values():
        n = counts[s]
        N = n.sum()
        pos = n > 0
        total += float((n[pos] * np.log(n[pos] / (N * p[s][pos]))).sum())
    return 2.0 * total


def multinomial_constant(counts, slices: Mapping[str, slice]) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(sum(gammaln(counts[s].sum() + 1) - gammaln(counts[s] + 1).sum()
                     for s in slices.values()))


@dataclass
class FitResult:
    estimates: dict[str, float]          # parameters of the fitted (rewritten) model
    log_likelihood: float                # full multinomial log-likelihood
    g_squared: float
    df: int
    converged: bool
    iterations: int
    n_starts: int
    binary_estimates: dict[str, float] = field(default_factory=dict)
    gradient_norm: float = float("nan")
    seed: int | None = None
    information: np.ndarray | None = field(default=None, repr=False)
    model: MptModel | None = field(default=None, repr=False)
    transform: BinaryTransform | None = field(default=None, repr=False)
    counts: np.ndarray | None = field(default=None, repr=False)

    def record(self) -> dict:
        return {"estimates": self.estimates, "binary_estimates": self.binary_estimates,
                "log_likelihood": self.log_likelihood, "g_squared": self.g_squared,
                "df": self.df, "converged": self.converged, "iterations": self.iterations,
                "n_starts": self.n_starts, "gradient_norm": self.gradient_norm, "seed": self.seed}

    def text(self) -> str:
        lines = [f"G2 = {self.g_squared:.6f}  df = {self.df}  logL = {self.log_likelihood:.6f}",
                 f"converged = {self.converged}  iterations = {self.iterations}  "
                 f"starts = {self.n_starts}", ""]
        width = max([len(n) for n in self.estimates] + [9])
        lines += [f"{n:<{width}}  {v:.6f}" for n, v in self.estimates.items()]
        return "\n".join(lines)


def _em(cm: CompiledModel, counts: np.ndarray, theta: np.ndarray, max_iter: int, tol: float):
    theta = theta.copy()
    active = np.ones(len(theta), dtype=bool)
    iters = np.zeros(len(theta), dtype=int)
    for _ in range(max_iter):
        if not active.any():
            break
        new = cm.em_step(theta[active], counts)
        step = np.abs(new - theta[active]).max(axis=1)
        theta[active] = new
        iters[active] += 1
        idx = np.flatnonzero(active)
        active[idx[step < tol]] = False
    return theta, iters, ~active


def projected_gradient(cm: CompiledModel, theta, counts) -> np.ndarray:
    g = cm.score(theta, counts) / counts.sum()
    g = np.where((theta <= 0.0) & (g < 0), 0.0, g)
    return np.where((theta >= 1.0) & (g > 0), 0.0, g)


def _polish(cm: CompiledModel, counts: np.ndarray, theta: np.ndarray):
    N = counts.sum()

    def f(t):
        return -cm.loglik_kernel(t, counts) / N, -cm.score(t, counts) / N

    res = minimize(f, theta, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * len(theta),
                   options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 2000})
    return np.clip(res.x, 0.0, 1.0), int(res.nit)


def observed_information(cm: CompiledModel, theta, counts, step: float = DELTA_STEP) -> np.ndarray:
    """Negative Hessian of the log-likelihood: differences of the exact score."""
    theta = np.asarray(theta, dtype=float)
    d = len(theta)
    H = np.zeros((d, d))
    for i in range(d):
        lo, hi = theta.copy(), theta.copy()
        lo[i] = max(theta[i] - step, 0.0)
        hi[i] = min(theta[i] + step, 1.0)
        H[:, i] = (cm.score(hi, counts) - cm.score(lo, counts)) / (hi[i] - lo[i])
    return -(H + H.T) / 2.0


def fit(model: MptModel, data: Dataset, starts: int = DEFAULT_STARTS, seed: int = 0,
        max_iter: int = EM_MAX_ITER) -> FitResult:
    """Multistart maximum likelihood for a model without order declarations."""
    if starts < 1:
        raise ValueError("starts must be >= 1")
    if model.orders:
        raise ModelError("model still carries order constraints; transform it first")
    cm, transform = compile_model(model)
    counts = data.vector(model)
    if any(counts[s].sum() < 1 for s in cm.tree_slices.values()):
        raise FitError("every tree needs at least one observation")
    return _fit_compiled(cm, transform, model, counts, starts, seed, max_iter)


def _fit_compiled(cm, transform, model, counts, starts, seed, max_iter=EM_MAX_ITER) -> FitResult:
    rng = np.random.default_rng(seed)
    d = cm.d
    if d == 0:
        best, iters = np.zeros(0), 0
    else:
        theta0 = rng.uniform(START_LOW, START_HIGH, size=(starts, d))
        theta, it, _ = _em(cm, counts, theta0, max_iter, EM_TOL)
        ll = cm.loglik_kernel(theta, counts)
        b = int(np.argmax(ll))
        polished, nit = _polish(cm, counts, theta[b])
        best = polished if cm.loglik_kernel(polished, counts) >= ll[b] else theta[b]
        iters = int(it[b]) + nit
    grad = projected_gradient(cm, best, counts) if d else np.zeros(0)
    gnorm = float(np.linalg.norm(grad)) if d else 0.0
    conv = gnorm < GRAD_TOL
    p = cm.probs(best)
    kernel = float(cm.loglik_kernel(best, counts))
    binary = cm.assignment(best)
    info = observed_information(cm, best, counts) if d else np.zeros((0, 0))
    return FitResult(
        estimates=transform.from_binary(binary),
        log_likelihood=kernel + multinomial_constant(counts, cm.tree_slices),
        g_squared=max(g_squared(counts, p, cm.tree_slices), 0.0),
        df=model.df_data - d,
        converged=bool(conv),
        iterations=int(iters),
        n_starts=starts,
        binary_estimates=binary,
        gradient_norm=gnorm,
        seed=seed,
        information=info,
        model=model,
        transform=transform,
        counts=counts,
    )


# ----------------------------------------------------------- back-transform

@dataclass
class BackTransformed:
    names: tuple[str, ...]                    # original model parameters
    estimates: dict[str, float]
    standard_errors: dict[str, float]         # nan where unavailable
    covariance: np.ndarray | None
    eta: dict[str, dict[str, float]]          # constrained groups
    rewritten: dict[str, float]               # rewritten model scale
    boundary: tuple[str, ...] = ()            # binary parameters on the boundary
    singular: bool = False
    notes: list[str] = field(default_factory=list)

    def record(self) -> dict:
        cov = None if self.covariance is None else [
            [None if np.isnan(x) else float(x) for x in row] for row in self.covariance]
        return {"names": list(self.names), "estimates": self.estimates,
                "standard_errors": {k: (None if np.isnan(v) else v)
                                    for k, v in self.standard_errors.items()},
                "covariance": cov, "eta": self.eta, "rewritten": self.rewritten,
                "boundary": list(self.boundary), "singular": self.singular, "notes": self.notes}

    def text(self) -> str:
        width = max([len(n) for n in self.names] + [9])
        lines = [f"{'parameter':<{width}}  estimate    se"]
        for n in self.names:
            se = self.standard_errors[n]
            se_txt = "   n/a" if np.isnan(se) else f"{se:.6f}"
            lines.append(f"{n:<{width}}  {self.estimates[n]:.6f}  {se_txt}")
        lines += [f"note: {x}" for x in self.notes]
        return "\n".join(lines)


def _jacobian(func, x: np.ndarray, step: float = DELTA_STEP) -> np.ndarray:
    """Central differences, one-sided where a step would leave [0, 1]."""
    f0 = func(x)
    J = np.zeros((len(f0), len(x)))
    for i in range(len(x)):
        lo, hi = x.copy(), x.copy()
        lo[i] = max(x[i] - step, 0.0)
        hi[i] = min(x[i] + step, 1.0)
        J[:, i] = (func(hi) - func(lo)) / (hi[i] - lo[i])
    return J


def back_transform(fit_result: FitResult, pipeline=None) -> BackTransformed:
    """Map binary estimates to the original parameters with delta-method SEs.

    Parameters on the boundary are held fixed; standard errors of original
    parameters that depend on them are reported as unavailable.
    """
    if fit_result.model is None or fit_result.transform is None:
        raise FitError("fit result carries no model")
    transform = fit_result.transform
    bnames = tuple(fit_result.binary_estimates)
    theta = np.array([fit_result.binary_estimates[n] for n in bnames])
    if pipeline is not None:
        names = pipeline.original.parameter_names
        groups = pipeline.constrained_groups()
    else:
        names = fit_result.model.parameter_names
        groups = {}

    def to_original(t):
        vals = transform.from_binary(dict(zip(bnames, t)))
        if pipeline is not None:
            vals = pipeline.backward(vals)
        return vals

    def g(t):
        vals = to_original(t)
        return np.array([vals[n] for n in names])

    est = dict(zip(names, map(float, g(theta))))
    notes = []
    if not fit_result.converged:
        notes.append("fit did not converge")
    J = _jacobian(g, theta) if len(theta) else np.zeros((len(names), 0))
    on_edge = (theta < BOUNDARY) | (theta > 1 - BOUNDARY)
    free = ~on_edge
    info = fit_result.information[np.ix_(free, free)]
    singular = False
    cov = None
    se = np.full(len(names), np.nan)
    if info.size == 0:
        cov = np.zeros((len(names), len(names)))
        se = np.zeros(len(names))
    else:
        try:
            if np.linalg.cond(info) > 1e12:
                raise np.linalg.LinAlgError
            inv = np.linalg.inv(info)
            Jf = J[:, free]
            cov = Jf @ inv @ Jf.T
            cov = (cov + cov.T) / 2.0
            se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        except np.linalg.LinAlgError:
            singular = True
            notes.append("observed information is singular; standard errors unavailable")
    if on_edge.any():
        notes.append("boundary estimates: " + ", ".join(n for n, e in zip(bnames, on_edge) if e))
        touched = np.abs(J[:, on_edge]).max(axis=1) > 1e-9
        se[touched] = np.nan
        if cov is not None:
            cov[touched, :] = np.nan
            cov[:, touched] = np.nan
    rewritten = transform.from_binary(dict(zip(bnames, map(float, theta))))
    eta = {grp: {m: est[m] for m in members} for grp, members in groups.items()}
    return BackTransformed(tuple(names), est, dict(zip(names, map(float, se))), cov, eta,
                           rewritten, tuple(n for n, e in zip(bnames, on_edge) if e),
                           singular, notes)


# ---------------------------------------------------------------- bootstrap

@dataclass
class BootstrapResult:
    observed: float
    replicates: list[float]
    p_value: float
    B: int
    seed: int
    dropped: int = 0
    fit: FitResult | None = field(default=None, repr=False)

    def record(self) -> dict:
        return {"observed": self.observed, "replicates": self.replicates, "p_value": self.p_value,
                "B": self.B, "seed": self.seed, "dropped": self.dropped}

    def text(self) -> str:
        return (f"observed G2 = {self.observed:.6f}\nB = {self.B}  dropped = {self.dropped}\n"
                f"p = {self.p_value:.6f}")


def bootstrap_p_value(observed: float, replicates) -> float:
    reps = np.asarray(replicates, dtype=float)
    return float((1 + np.sum(reps >= observed)) / (len(reps) + 1))


def bootstrap_g2(model: MptModel, data: Dataset, B: int, seed: int, starts: int = 5,
                 fit_starts: int = DEFAULT_STARTS, threads: int = 1) -> BootstrapResult:
    """Parametric bootstrap of G² at the fitted parameters.

    Replicate b draws data and refits with generators seeded by ``(seed, b)``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    cm, transform = compile_model(model) if not model.orders else (None, None)
    if cm is None:
        raise ModelError("model still carries order constraints; transform it first")
    counts = data.vector(model)
    base = _fit_compiled(cm, transform, model, counts, fit_starts, seed)
    theta = np.array([base.binary_estimates[n] for n in cm.names])
    tree_p = cm.tree_probs(theta)
    n = {t: int(counts[s].sum()) for t, s in cm.tree_slices.items()}

    def one(b: int) -> float | None:
        ss = np.random.SeedSequence([seed, b])
        draw_seed, fit_seed = ss.spawn(2)
        rng = np.random.default_rng(draw_seed)
        drawn = draw_counts(tree_p, n, rng)
        vec = np.concatenate([drawn[t] for t in cm.tree_slices]).astype(float)
        try:
            r = _fit_compiled(cm, transform, model, vec, starts,
                              int(fit_seed.generate_state(1)[0]))
        except (FitError, FloatingPointError, np.linalg.LinAlgError, ValueError):
            return None
        return r.g_squared if np.isfinite(r.g_squared) else None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(one, range(B)))
    else:
        out = [one(b) for b in range(B)]
    reps = [float(x) for x in out if x is not None]
    dropped = B - len(reps)
    if dropped > MAX_DROP_RATE * B:
        raise FitError(f"{dropped} of {B} bootstrap replicates failed")
    return BootstrapResult(base.g_squared, reps, bootstrap_p_value(base.g_squared, reps), B, seed,
                           dropped, base)
