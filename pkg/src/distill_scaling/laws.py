"""Supervised and distillation scaling laws.

The default evaluation path works in log space so that very small or very
large terms neither overflow nor vanish. A plain linear path is kept for
cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.optimize import minimize_scalar


class DomainError(ValueError):
    """Raised when a law is evaluated outside its domain."""


def _positive(name, x):
    a = np.asarray(x, dtype=float)
    if np.any(~(a > 0)):
        raise DomainError(f"{name} must be positive")
    return a


def _as_out(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class SupervisedCoeffs:
    E: float
    A: float
    B: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"coefficient {f.name} must be positive and finite")

    @property
    def a(self) -> float:
        """Compute-optimal exponent for parameters."""
        return self.beta / (self.alpha + self.beta)

    @property
    def b(self) -> float:
        """Compute-optimal exponent for tokens."""
        return self.alpha / (self.alpha + self.beta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SupervisedCoeffs":
        return cls(**{f.name: float(d[f.name]) for f in fields(cls)})


@dataclass(frozen=True)
class DistillCoeffs:
    A: float
    B: float
    alpha: float
    beta: float
    gamma: float
    c0: float
    c1: float
    f1: float
    d1: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"coefficient {f.name} must be positive and finite")

    @property
    def a(self) -> float:
        return self.beta / (self.alpha + self.beta)

    @property
    def b(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DistillCoeffs":
        return cls(**{f.name: float(d[f.name]) for f in fields(cls)})


REFERENCE_SUPERVISED = SupervisedCoeffs(E=1.220, A=3355.0, B=18186.0,
                                     alpha=0.408, beta=0.431, gamma=0.452)
REFERENCE_DISTILL = DistillCoeffs(A=2243.0, B=24181.0, alpha=0.321, beta=0.637,
                               gamma=0.764, c0=2.549, c1=522.6, f1=0.090, d1=1.315)

# 90% bootstrap intervals reported alongside the coefficients above
REFERENCE_INTERVALS = {
    "supervised": {
        "E": (1.190, 1.247), "A": (3346.0, 3360.0), "B": (18157.0, 18236.0),
        "alpha": (0.405, 0.411), "beta": (0.428, 0.433), "gamma": (0.442, 0.461),
        "a": (0.513, 0.513), "b": (0.486, 0.486),
    },
    "distill": {
        "A": (2227.0, 2255.0), "B": (24084.0, 24266.0), "alpha": (0.319, 0.324),
        "beta": (0.634, 0.640), "gamma": (0.732, 0.788), "c0": (2.425, 2.615),
        "c1": (522.6, 522.6), "f1": (0.088, 0.093), "d1": (1.302, 1.327),
        "a": (0.662, 0.665), "b": (0.334, 0.337),
    },
}
REFERENCE_RUN_COUNTS = {"supervised": 73, "distill": 697}


# -- supervised -------------------------------------------------------------

def supervised_log_loss(N, D, c: SupervisedCoeffs):
    lnN = np.log(_positive("N", N))
    lnD = np.log(_positive("D", D))
    inner = np.logaddexp(math.log(c.A) - c.alpha * lnN, math.log(c.B) - c.beta * lnD)
    return _as_out(np.logaddexp(math.log(c.E), c.gamma * inner))


def supervised_loss(N, D, c: SupervisedCoeffs):
    """Cross-entropy of a model with N non-embedding params trained on D tokens."""
    return _as_out(np.exp(supervised_log_loss(N, D, c)))


def supervised_loss_linear(N, D, c: SupervisedCoeffs):
    N = _positive("N", N)
    D = _positive("D", D)
    return _as_out(c.E + (c.A * N ** -c.alpha + c.B * D ** -c.beta) ** c.gamma)


def supervised_limit(N, c: SupervisedCoeffs):
    """Loss in the infinite-data limit."""
    N = _positive("N", N)
    return _as_out(c.E + (c.A * N ** -c.alpha) ** c.gamma)


def tokens_for_loss(N, target: float, c: SupervisedCoeffs) -> float:
    """Tokens D with L(N, D) == target; raises if target is at or below the data limit."""
    rest = (target - c.E) ** (1 / c.gamma) - c.A * N ** -c.alpha if target > c.E else -1.0
    if not rest > 0:
        raise DomainError("target loss is not reachable at this model size")
    return (c.B / rest) ** (1 / c.beta)


# -- distillation -----------------------------------------------------------

def _gap_log_factor(lnLT, ln_tilde, dc: DistillCoeffs):
    y = (lnLT - ln_tilde - math.log(dc.d1)) / dc.f1
    return -dc.c1 * dc.f1 * np.logaddexp(0.0, y)


def capacity_gap_factor(L_T, L_tilde, dc: DistillCoeffs):
    """The bracketed teacher/student transition factor, in (0, 1]."""
    lnLT = np.log(_positive("L_T", L_T))
    lnLt = np.log(_positive("L_tilde", L_tilde))
    return _as_out(np.exp(_gap_log_factor(lnLT, lnLt, dc)))


def distillation_log_loss(N_S, D_S, L_T, dc: DistillCoeffs, sc: SupervisedCoeffs):
    lnN = np.log(_positive("N_S", N_S))
    lnD = np.log(_positive("D_S", D_S))
    lnLT = np.log(_positive("L_T", L_T))
    ln_tilde = np.asarray(supervised_log_loss(np.exp(lnN), np.exp(lnD), sc))
    inner = np.logaddexp(math.log(dc.A) - dc.alpha * lnN, math.log(dc.B) - dc.beta * lnD)
    z = -dc.c0 * lnLT + _gap_log_factor(lnLT, ln_tilde, dc) + dc.gamma * inner
    return _as_out(np.logaddexp(lnLT, z))


def distillation_loss(N_S, D_S, L_T, dc: DistillCoeffs, sc: SupervisedCoeffs):
    """Student cross-entropy after distilling D_S tokens from a teacher with loss L_T."""
    return _as_out(np.exp(distillation_log_loss(N_S, D_S, L_T, dc, sc)))


def distillation_loss_linear(N_S, D_S, L_T, dc: DistillCoeffs, sc: SupervisedCoeffs):
    N_S = _positive("N_S", N_S)
    D_S = _positive("D_S", D_S)
    L_T = _positive("L_T", L_T)
    tilde = supervised_loss_linear(N_S, D_S, sc)
    gap = (1 + (L_T / (tilde * dc.d1)) ** (1 / dc.f1)) ** (-dc.c1 * dc.f1)
    body = (dc.A * N_S ** -dc.alpha + dc.B * D_S ** -dc.beta) ** dc.gamma
    return _as_out(L_T + L_T ** -dc.c0 * gap * body)


def distillation_limit(N_S, L_T, dc: DistillCoeffs, sc: SupervisedCoeffs):
    """Student loss in the infinite distillation-data limit."""
    lnN = np.log(_positive("N_S", N_S))
    lnLT = np.log(_positive("L_T", L_T))
    ln_tilde = np.log(np.asarray(supervised_limit(np.exp(lnN), sc)))
    z = (-dc.c0 * lnLT + _gap_log_factor(lnLT, ln_tilde, dc)
         + dc.gamma * (math.log(dc.A) - dc.alpha * lnN))
    return _as_out(np.exp(np.logaddexp(lnLT, z)))


@dataclass(frozen=True)
class BestTeacher:
    L_T: float
    L_S: float
    at_boundary: bool


def best_teacher_loss(N_S: float, D_S: float, dc: DistillCoeffs, sc: SupervisedCoeffs,
                      lo: float | None = None, hi: float = 10.0,
                      n_grid: int = 2001) -> BestTeacher:
    """Teacher loss minimizing the student loss at fixed (N_S, D_S).

    ``D_S=inf`` uses the infinite-data limit. A dense log grid brackets the
    minimum which is then refined with a bounded scalar search.
    """
    lo = sc.E * 1.001 if lo is None else lo
    if not 0 < lo < hi:
        raise DomainError("teacher loss search interval is empty")
    if math.isinf(D_S):
        f = lambda lt: distillation_limit(N_S, lt, dc, sc)
    else:
        f = lambda lt: distillation_loss(N_S, D_S, lt, dc, sc)
    grid = np.geomspace(lo, hi, n_grid)
    vals = np.asarray(f(grid))
    i = int(np.argmin(vals))
    if i == 0 or i == n_grid - 1:
        return BestTeacher(float(grid[i]), float(vals[i]), True)
    res = minimize_scalar(lambda u: f(math.exp(u)), method="bounded",
                          bounds=(math.log(grid[i - 1]), math.log(grid[i + 1])),
                          options={"xatol": 1e-12})
    lt = math.exp(res.x)
    ls = float(f(lt))
    if ls > vals[i]:
        lt, ls = float(grid[i]), float(vals[i])
    return BestTeacher(lt, ls, False)

