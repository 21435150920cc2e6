"""Robust fitting of the supervised and distillation laws.

Both fits minimize a Huber loss on log residuals (log model minus log
observation) with multi-start L-BFGS-B. Scale coefficients (A, B, E, d1) are
optimized in log space, exponents directly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import expit

from . import numkit
from .laws import (DistillCoeffs, SupervisedCoeffs, REFERENCE_DISTILL, REFERENCE_SUPERVISED,
                   supervised_loss)


@dataclass(frozen=True)
class SupervisedRun:
    N: float
    D: float
    L: float

    def __post_init__(self):
        if not (self.N > 0 and self.D > 0 and self.L > 0):
            raise ValueError("run values must be positive")


@dataclass(frozen=True)
class DistillRun:
    N_S: float
    D_S: float
    L_T: float
    L_S: float
    N_T: float | None = None
    D_T: float | None = None

    def __post_init__(self):
        if not (self.N_S > 0 and self.D_S > 0 and self.L_T > 0 and self.L_S > 0):
            raise ValueError("run values must be positive")


SUPERVISED_GRID = {
    "logA": [0, 5, 10, 15, 20],
    "logB": [0, 5, 10, 15, 20],
    "logE": [-1, -0.5, 0, 0.5, 1, 1.5],
    "alpha": [0, 0.5, 1, 1.5],
    "beta": [0, 0.5, 1, 1.5],
    "gamma": [0, 0.5, 1, 1.5],
}

DISTILL_GRID = {
    "logA": [0, 5, 10, 15, 20],
    "logB": [0, 5, 10, 15, 20],
    "alpha": [0, 0.5, 1],
    "beta": [0, 0.5, 1],
    "gamma": [0, 0.5, 1],
    "c0": [0, 0.5, 1, 1.5],
    "c1": [0, 0.5, 1, 1.5],
    "f1": [0, 0.5, 1, 1.5],
    "logd1": [-1, -0.5, 0, 0.5, 1],
}

_EPS = 1e-8
SUPERVISED_BOUNDS = numkit.Bounds(
    [-20, -20, -5, _EPS, _EPS, _EPS],
    [40, 40, 3, 5, 5, 5],
)
DISTILL_BOUNDS = numkit.Bounds(
    [-20, -20, _EPS, _EPS, _EPS, _EPS, _EPS, 1e-3, -3],
    [40, 40, 5, 5, 5, 20, 1e4, 10, 3],
)


@dataclass
class FitConfig:
    huber_delta: float = 1e-4
    grid: dict | None = None  # None selects the default grid of the law being fit
    filter_loss: float | None = None  # keep runs with observed loss >= this
    max_starts: int = 256
    start_selection: str = "random"  # "random" or "best" (lowest initial objective)
    budget: int = 2000
    bootstrap: int = 0
    level: float = 0.9
    seed: int = 0
    fixed: dict | None = None  # coefficient name -> value held fixed during the fit


@dataclass
class FitResult:
    coefficients: SupervisedCoeffs | DistillCoeffs
    objective: float
    n_runs: int
    converged: bool
    trace: list = field(default_factory=list)
    intervals: dict | None = None

    def to_dict(self) -> dict:
        c = self.coefficients
        out = {
            "coefficients": c.to_dict(),
            "exponents": {"a": c.a, "b": c.b},
            "objective": self.objective,
            "n_runs": self.n_runs,
            "converged": self.converged,
        }
        if self.intervals is not None:
            out["intervals"] = {k: list(v) for k, v in self.intervals.items()}
        return out


# -- supervised model in parameter-vector form ------------------------------

def _sup_arrays(runs: Sequence[SupervisedRun]):
    return (np.log([r.N for r in runs]), np.log([r.D for r in runs]),
            np.log([r.L for r in runs]))


def sup_log_model(theta, lnN, lnD, grad: bool = False):
    logA, logB, logE, al, be, ga = theta
    a1 = logA - al * lnN
    a2 = logB - be * lnD
    s = np.logaddexp(a1, a2)
    t = ga * s
    out = np.logaddexp(logE, t)
    if not grad:
        return out
    w1 = np.exp(a1 - s)
    u1 = np.exp(t - out)
    J = np.empty((out.size, 6))
    J[:, 0] = u1 * ga * w1
    J[:, 1] = u1 * ga - J[:, 0]
    J[:, 2] = 1.0 - u1
    J[:, 3] = -J[:, 0] * lnN
    J[:, 4] = -J[:, 1] * lnD
    J[:, 5] = u1 * s
    return out, J


def _sup_theta(c: SupervisedCoeffs) -> np.ndarray:
    return np.array([math.log(c.A), math.log(c.B), math.log(c.E), c.alpha, c.beta, c.gamma])


def _sup_coeffs(theta) -> SupervisedCoeffs:
    logA, logB, logE, al, be, ga = theta
    return SupervisedCoeffs(E=math.exp(logE), A=math.exp(logA), B=math.exp(logB),
                            alpha=float(al), beta=float(be), gamma=float(ga))


# -- distillation model in parameter-vector form ----------------------------

def _dist_arrays(runs: Sequence[DistillRun], sc: SupervisedCoeffs):
    lnN = np.log([r.N_S for r in runs])
    lnD = np.log([r.D_S for r in runs])
    lnLT = np.log([r.L_T for r in runs])
    ln_tilde = sup_log_model(_sup_theta(sc), lnN, lnD)
    return lnN, lnD, lnLT, ln_tilde, np.log([r.L_S for r in runs])


def dist_log_model(theta, lnN, lnD, lnLT, ln_tilde, grad: bool = False):
    logA, logB, al, be, ga, c0, c1, f1, logd1 = theta
    a1 = logA - al * lnN
    a2 = logB - be * lnD
    s = np.logaddexp(a1, a2)
    y = (lnLT - ln_tilde - logd1) / f1
    q = np.logaddexp(0.0, y)
    z = -c0 * lnLT - c1 * f1 * q + ga * s
    out = np.logaddexp(lnLT, z)
    if not grad:
        return out
    w1 = np.exp(a1 - s)
    sig = expit(y)
    u = np.exp(z - out)
    ug = u * ga
    J = np.empty((out.size, 9))
    J[:, 0] = ug * w1
    J[:, 1] = ug - J[:, 0]
    J[:, 2] = -J[:, 0] * lnN
    J[:, 3] = -J[:, 1] * lnD
    J[:, 4] = u * s
    J[:, 5] = -u * lnLT
    J[:, 6] = -u * f1 * q
    J[:, 7] = u * c1 * (sig * y - q)
    J[:, 8] = u * c1 * sig
    return out, J


def _dist_theta(c: DistillCoeffs) -> np.ndarray:
    return np.array([math.log(c.A), math.log(c.B), c.alpha, c.beta, c.gamma,
                     c.c0, c.c1, c.f1, math.log(c.d1)])


def _dist_coeffs(theta) -> DistillCoeffs:
    logA, logB, al, be, ga, c0, c1, f1, logd1 = theta
    return DistillCoeffs(A=math.exp(logA), B=math.exp(logB), alpha=float(al),
                         beta=float(be), gamma=float(ga), c0=float(c0), c1=float(c1),
                         f1=float(f1), d1=math.exp(logd1))


# -- generic fitting machinery ----------------------------------------------

def _grid_starts(grid: dict, names: Sequence[str], bounds: numkit.Bounds,
                 cfg: FitConfig, score=None) -> list[np.ndarray]:
    axes = [np.asarray(grid[n], dtype=float) for n in names]
    total = math.prod(len(a) for a in axes)
    if total <= cfg.max_starts:
        pts = np.array(list(itertools.product(*axes)))
    elif cfg.start_selection == "best" and score is not None:
        pts = np.array(list(itertools.product(*axes)))
        pts = np.clip(pts, bounds.lower, bounds.upper)
        vals = np.array([score(p) for p in pts])
        vals[~np.isfinite(vals)] = np.inf
        order = np.argsort(vals, kind="stable")[:cfg.max_starts]
        pts = pts[np.sort(order)]
    else:
        pick = np.sort(numkit.make_rng(cfg.seed).choice(total, cfg.max_starts, replace=False))
        idx = np.array(np.unravel_index(pick, [len(a) for a in axes])).T
        pts = np.array([[axes[j][i] for j, i in enumerate(row)] for row in idx])
    return [np.clip(p, bounds.lower, bounds.upper) for p in pts]


def _make_objective(model, data, y, delta):
    # optimizer sees the loss scaled by 1/delta^2 so that both the quadratic and
    # linear regimes are well above L-BFGS-B's absolute tolerances
    def f(theta):
        with np.errstate(over="ignore", invalid="ignore"):
            out, J = model(theta, *data, grad=True)
        r = out - y
        val = np.sum(numkit.huber(r, delta)) / delta**2
        g = (np.clip(r, -delta, delta) @ J) / delta**2
        if not np.isfinite(val) or not np.all(np.isfinite(g)):
            return 1e300, np.zeros_like(theta)
        return val, g
    return f


_LOG_PARAMS = {"A": "logA", "B": "logB", "E": "logE", "d1": "logd1"}


def _free_problem(model, names, bounds, fixed):
    """Restrict a model to its free parameters given ``fixed`` coefficients."""
    template = np.zeros(len(names))
    free = np.ones(len(names), dtype=bool)
    for key, value in (fixed or {}).items():
        pname = _LOG_PARAMS.get(key, key)
        if pname not in names:
            raise ValueError(f"unknown coefficient {key!r}")
        if not value > 0:
            raise ValueError("fixed coefficients must be positive")
        j = names.index(pname)
        template[j] = math.log(value) if pname.startswith("log") else value
        free[j] = False
    if not free.any():
        raise ValueError("at least one coefficient must be free")

    def full(t):
        th = template.copy()
        th[free] = t
        return th

    def sub_model(t, *data, grad=False):
        if not grad:
            return model(full(t), *data)
        out, J = model(full(t), *data, grad=True)
        return out, J[:, free]

    if free.all():
        return model, (lambda t: np.asarray(t, dtype=float)), free, bounds
    sub_bounds = numkit.Bounds(bounds.lower[free], bounds.upper[free])
    return sub_model, full, free, sub_bounds


def _warm_fit(obj, x0, bounds, full, cfg, precond):
    # work in coordinates whitened by the curvature at x0; refits from a nearby
    # optimum then take a few dozen iterations instead of a few hundred
    if precond is None:
        precond = np.eye(x0.size)
    free = numkit.Bounds(np.full(x0.size, -np.inf), np.full(x0.size, np.inf))

    def fz(z):
        v, g = obj(x0 + precond @ z)
        return v, precond.T @ g
    res = numkit.minimize_bounded(fz, [np.zeros(x0.size)], free, budget=cfg.budget, jac=True)
    x = x0 + precond @ res.x
    if not bounds.contains(x):
        res = numkit.minimize_bounded(obj, [bounds.clip(x)], bounds, budget=cfg.budget, jac=True)
        x = res.x
    res.x = full(x)
    return res, res.fun * cfg.huber_delta**2


def _preconditioner(model, data, y, x, delta):
    """Inverse Cholesky factor of the reweighted Gauss-Newton Hessian at x."""
    out, J = model(x, *data, grad=True)
    w = np.minimum(1.0, delta / np.maximum(np.abs(out - y), 1e-300))
    H = (J * w[:, None]).T @ J
    try:
        return np.linalg.inv(np.linalg.cholesky(H)).T
    except np.linalg.LinAlgError:
        return None


def _fit(model, data, y, names, grid, bounds, cfg: FitConfig, warm=None, precond=None):
    model, full, free, bounds = _free_problem(model, names, bounds, cfg.fixed)
    free_names = [n for n, f in zip(names, free) if f]
    obj = _make_objective(model, data, y, cfg.huber_delta)
    if warm is not None:
        return _warm_fit(obj, warm[free], bounds, full, cfg, precond)
    starts = _grid_starts(grid, free_names, bounds, cfg, score=lambda p: obj(p)[0])
    res = numkit.minimize_bounded(obj, starts, bounds, budget=cfg.budget, jac=True)
    # polish the winner with a trust-region least-squares step on the same Huber
    # objective; L-BFGS-B stalls along nearly flat directions
    pol = least_squares(lambda t: model(t, *data) - y, res.x,
                        jac=lambda t: model(t, *data, grad=True)[1],
                        bounds=(bounds.lower, bounds.upper), method="trf", loss="huber",
                        f_scale=cfg.huber_delta, xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=cfg.budget)
    fun = obj(pol.x)[0]
    if fun <= res.fun:
        res.x, res.fun = bounds.clip(pol.x), fun
    res.x = full(res.x)
    return res, res.fun * cfg.huber_delta**2


def _filter(runs, cfg, n_coef, loss_of):
    runs = list(runs)
    if cfg.filter_loss is not None:
        runs = [r for r in runs if loss_of(r) >= cfg.filter_loss]
    if len(runs) < n_coef:
        raise ValueError("fewer runs than coefficients after filtering")
    return runs


def _coef_vector(c) -> np.ndarray:
    return np.array(list(c.to_dict().values()) + [c.a, c.b])


def _fit_law(runs, cfg, arrays, model, names, default_grid, bounds, to_coeffs, label):
    data, y = arrays(runs)
    grid = cfg.grid or default_grid
    res, val = _fit(model, data, y, names, grid, bounds, cfg)
    if not res.converged:
        raise numkit.ConvergenceError(f"no start converged for the {label} fit")
    coeffs = to_coeffs(res.x)
    out = FitResult(coeffs, val, len(runs), True, res.trace)
    if cfg.bootstrap:
        # resampled fits start from the full-sample optimum
        sub, _, free, _ = _free_problem(model, names, bounds, cfg.fixed)
        P = _preconditioner(sub, data, y, res.x[free], cfg.huber_delta)

        def stat(sample):
            d, yy = arrays(sample)
            r, _ = _fit(model, d, yy, names, grid, bounds, cfg, warm=res.x, precond=P)
            return _coef_vector(to_coeffs(r.x))
        bs = numkit.bootstrap(runs, stat, cfg.bootstrap, cfg.level, cfg.seed)
        keys = list(coeffs.to_dict()) + ["a", "b"]
        out.intervals = {k: (float(bs.low[i]), float(bs.high[i])) for i, k in enumerate(keys)}
    return out


def fit_supervised(runs: Sequence[SupervisedRun], cfg: FitConfig | None = None) -> FitResult:
    cfg = cfg or FitConfig()
    runs = _filter(runs, cfg, 6, lambda r: r.L)

    def arrays(rs):
        lnN, lnD, y = _sup_arrays(rs)
        return (lnN, lnD), y
    return _fit_law(runs, cfg, arrays, sup_log_model, list(SUPERVISED_GRID), SUPERVISED_GRID,
                    SUPERVISED_BOUNDS, _sup_coeffs, "supervised")


def fit_distillation(runs: Sequence[DistillRun], sc: SupervisedCoeffs,
                     cfg: FitConfig | None = None) -> FitResult:
    """Fit the distillation law with the supervised coefficients held fixed."""
    cfg = cfg or FitConfig()
    runs = _filter(runs, cfg, 9, lambda r: r.L_S)

    def arrays(rs):
        d = _dist_arrays(rs, sc)
        return d[:4], d[4]
    return _fit_law(runs, cfg, arrays, dist_log_model, list(DISTILL_GRID), DISTILL_GRID,
                    DISTILL_BOUNDS, _dist_coeffs, "distillation")


def fit_objective(coeffs, runs, cfg: FitConfig | None = None,
                  sc: SupervisedCoeffs | None = None) -> float:
    """Huber objective of given coefficients on a run set."""
    cfg = cfg or FitConfig()
    if isinstance(coeffs, SupervisedCoeffs):
        lnN, lnD, y = _sup_arrays(runs)
        r = sup_log_model(_sup_theta(coeffs), lnN, lnD) - y
    else:
        if sc is None:
            raise ValueError("distillation objective needs supervised coefficients")
        d = _dist_arrays(runs, sc)
        r = dist_log_model(_dist_theta(coeffs), *d[:4]) - d[4]
    return float(np.sum(numkit.huber(r, cfg.huber_delta)))


# -- synthetic run designs --------------------------------------------------

def _subsample(pts, n):
    keep = np.linspace(0, len(pts) - 1, n).round().astype(int)
    return [pts[i] for i in keep]


def supervised_design(n_runs: int = 73) -> list[tuple[float, float]]:
    """(N, D) pairs from a 9x9 log grid: N in [1e6, 1e12], D/N in [0.3, 3e4].

    The wide span is what makes E and the exponents identifiable at
    half-percent noise; a narrower grid leaves them strongly correlated.
    """
    Ns = np.geomspace(1e6, 1e12, 9)
    Ms = np.geomspace(0.3, 3e4, 9)
    return _subsample([(float(N), float(M * N)) for N in Ns for M in Ms], n_runs)


def distill_design(n_runs: int = 697) -> list[tuple[float, float, float, float]]:
    """(N_S, D_S, N_T, D_T) from a student x token x teacher log grid.

    Teachers are trained at 20 tokens per parameter. Small token counts are
    included so that the data term is visible next to the parameter term.
    """
    NS = np.geomspace(1e6, 1e11, 9)
    DS = np.geomspace(1e5, 1e13, 11)
    NT = np.geomspace(1e6, 1e11, 8)
    pts = [(float(a), float(b), float(c), float(20 * c)) for a in NS for b in DS for c in NT]
    return _subsample(pts, n_runs)


def synthetic_supervised(coeffs: SupervisedCoeffs = REFERENCE_SUPERVISED, noise: float = 0.005,
                         seed: int = 0, design=None) -> list[SupervisedRun]:
    """Runs on the default design with multiplicative log-normal noise."""
    design = supervised_design() if design is None else design
    rng = numkit.make_rng(seed)
    N = np.array([p[0] for p in design])
    D = np.array([p[1] for p in design])
    L = supervised_loss(N, D, coeffs) * np.exp(noise * rng.standard_normal(len(design)))
    return [SupervisedRun(float(n), float(d), float(l)) for n, d, l in zip(N, D, L)]


def synthetic_distill(dc: DistillCoeffs = REFERENCE_DISTILL,
                      sc: SupervisedCoeffs = REFERENCE_SUPERVISED, noise: float = 0.005,
                      seed: int = 0, design=None) -> list[DistillRun]:
    """Distillation runs; teacher losses come from the supervised law, noise-free."""
    from .laws import distillation_loss
    design = distill_design() if design is None else design
    rng = numkit.make_rng(seed)
    a = np.array(design, dtype=float)
    LT = supervised_loss(a[:, 2], a[:, 3], sc)
    LS = distillation_loss(a[:, 0], a[:, 1], LT, dc, sc)
    LS = LS * np.exp(noise * rng.standard_normal(len(design)))
    return [DistillRun(float(r[0]), float(r[1]), float(lt), float(ls), float(r[2]), float(r[3]))
            for r, lt, ls in zip(a, LT, LS)]
