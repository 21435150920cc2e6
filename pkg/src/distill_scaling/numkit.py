"""Small numerical toolkit: stable reductions, robust loss, multi-start
optimizers and a percentile bootstrap.

The local solvers are scipy's L-BFGS-B and SLSQP; this module owns the
multi-start logic, finite-difference gradients and result bookkeeping.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special


class ConvergenceError(RuntimeError):
    pass


class InfeasibleError(ValueError):
    pass


def lse(x, axis=None):
    """log(sum(exp(x))) without overflow."""
    return special.logsumexp(x, axis=axis)


def huber(r, delta: float):
    """Elementwise Huber loss: r^2/2 inside |r| <= delta, linear outside."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return special.huber(delta, r)


def huber_grad(r, delta: float):
    return np.clip(r, -delta, delta)


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("bounds must have equal shape and lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def as_list(self):
        return list(zip(self.lower.tolist(), self.upper.tolist()))


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    converged: bool
    start_index: int
    n_iter: int
    trace: list = field(default_factory=list)  # (start index, objective, converged)


def central_grad(f: Callable, x: np.ndarray, bounds: Bounds | None = None,
                 rel_step: float = 1e-6) -> np.ndarray:
    """Central differences, switching to one-sided steps at active bounds."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        lo_ok = bounds is None or x[i] - h >= bounds.lower[i]
        hi_ok = bounds is None or x[i] + h <= bounds.upper[i]
        xp = x.copy()
        xm = x.copy()
        if lo_ok and hi_ok:
            xp[i] += h
            xm[i] -= h
            g[i] = (f(xp) - f(xm)) / (2 * h)
        elif hi_ok:
            xp[i] += h
            g[i] = (f(xp) - f(x)) / h
        else:
            xm[i] -= h
            g[i] = (f(x) - f(xm)) / h
    return g


def minimize_bounded(objective: Callable, starts: Sequence, bounds: Bounds,
                     budget: int = 2000, jac: Callable | bool | None = None,
                     gtol: float = 1e-9, ftol: float = 1e-12) -> OptimResult:
    """Multi-start L-BFGS-B over a box.

    ``jac=True`` means the objective returns (value, gradient). Otherwise a
    gradient callable may be given, or central differences are used. Returns
    the best converged start; if none converged the best start overall is
    returned with ``converged=False``.
    """
    starts = [np.asarray(s, dtype=float) for s in starts]
    if not starts:
        raise ValueError("at least one start is required")
    for s in starts:
        if s.shape != bounds.lower.shape or not bounds.contains(s):
            raise ValueError("every start must lie within the bounds")

    if jac is True:
        fun = objective
        use_jac = True
    elif callable(jac):
        fun = lambda x: (objective(x), jac(x))
        use_jac = True
    else:
        fun = lambda x: (objective(x), central_grad(objective, x, bounds))
        use_jac = True

    trace = []
    best = None
    for k, s in enumerate(starts):
        res = optimize.minimize(fun, s, jac=use_jac, method="L-BFGS-B",
                                bounds=bounds.as_list(),
                                options={"maxiter": budget, "gtol": gtol, "ftol": ftol,
                                         "maxfun": 4 * budget})
        x = bounds.clip(res.x)
        val = float(res.fun)
        ok = bool(res.success) and math.isfinite(val)
        trace.append((k, val, ok))
        cand = OptimResult(x, val, ok, k, int(res.nit))
        if best is None or _better(cand, best):
            best = cand
    best.trace = trace
    return best


def _better(a: OptimResult, b: OptimResult) -> bool:
    if not math.isfinite(a.fun):
        return False
    if a.converged != b.converged:
        return a.converged
    return a.fun < b.fun or not math.isfinite(b.fun)


def minimize_constrained(objective: Callable, constraint: Callable, starts: Sequence,
                         bounds: Bounds, budget: int = 500, tol: float = 1e-6) -> OptimResult:
    """Multi-start SLSQP with one or more equality constraints ``constraint(x) == 0``.

    Each start is first projected onto the feasible set (nearest point in the
    Euclidean sense). Starts whose projection fails are skipped; if all fail
    an ``InfeasibleError`` is raised. Constraints should be scaled so that
    ``tol`` is a meaningful relative tolerance.
    """
    cons = {"type": "eq", "fun": lambda x: np.atleast_1d(constraint(x))}
    trace = []
    best = None
    for k, s in enumerate(starts):
        s = np.asarray(s, dtype=float)
        if not bounds.contains(s):
            raise ValueError("every start must lie within the bounds")
        proj = optimize.minimize(lambda x: 0.5 * np.sum((x - s) ** 2), s,
                                 jac=lambda x: x - s, method="SLSQP",
                                 bounds=bounds.as_list(), constraints=[cons],
                                 options={"maxiter": budget, "ftol": 1e-14})
        x0 = bounds.clip(proj.x)
        if np.max(np.abs(cons["fun"](x0))) > tol:
            trace.append((k, math.inf, False))
            continue
        res = optimize.minimize(objective, x0, jac=lambda x: central_grad(objective, x, bounds),
                                method="SLSQP", bounds=bounds.as_list(),
                                constraints=[cons], options={"maxiter": budget, "ftol": 1e-14})
        x = bounds.clip(res.x)
        feas = np.max(np.abs(cons["fun"](x))) <= tol
        val = float(objective(x)) if feas else math.inf
        ok = feas and bool(res.success)
        trace.append((k, val, ok))
        cand = OptimResult(x, val, ok, k, int(res.nit))
        if feas and (best is None or _better(cand, best)):
            best = cand
    if best is None:
        raise InfeasibleError("no start could be projected onto the constraint set")
    best.trace = trace
    return best


@dataclass
class BootstrapResult:
    estimate: np.ndarray | None
    low: np.ndarray
    high: np.ndarray
    samples: np.ndarray
    level: float
    degenerate: bool


def bootstrap(records: Sequence, statistic: Callable, resamples: int = 4096,
              level: float = 0.9, seed=0) -> BootstrapResult:
    """Percentile bootstrap over records.

    Each resample draws from its own spawned substream, so results depend only
    on ``seed`` and not on evaluation order. ``statistic`` receives a list of
    records and returns a scalar or 1-D array.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if resamples < 1:
        raise ValueError("resamples must be positive")
    records = list(records)
    n = len(records)
    if n == 0:
        raise ValueError("no records to resample")
    degenerate = n == 1
    if degenerate:
        warnings.warn("bootstrap over a single record yields degenerate intervals")
    streams = np.random.SeedSequence(seed).spawn(resamples)
    out = []
    for ss in streams:
        idx = np.random.default_rng(ss).integers(0, n, size=n)
        out.append(np.atleast_1d(np.asarray(statistic([records[i] for i in idx]), dtype=float)))
    samples = np.vstack(out)
    tail = (1 - level) / 2
    low = np.quantile(samples, tail, axis=0)
    high = np.quantile(samples, 1 - tail, axis=0)
    return BootstrapResult(None, low, high, samples, level, degenerate)
