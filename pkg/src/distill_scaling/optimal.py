"""Compute-optimal distillation planning.

Total compute for a distillation run is
``3 F(N_S) D_S + F(N_T) (d_lgt D_S + 3 d_pre D_T)`` where ``F`` is forward
FLOPs per token, ``d_lgt`` switches on teacher inference for logits and
``d_pre`` switches on the cost of pretraining the teacher.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import numkit
from .accounting import DEFAULT_PROFILE, AspectProfile, flops_forward_from_N
from .laws import (DistillCoeffs, DomainError, SupervisedCoeffs, REFERENCE_DISTILL,
                   REFERENCE_SUPERVISED, best_teacher_loss, distillation_log_loss,
                   distillation_loss, supervised_loss, tokens_for_loss)

SCENARIOS = {
    "best-case": (0, 0),
    "teacher-inference": (1, 0),
    "teacher-pretraining": (0, 1),
    "teacher-pretraining+inference": (1, 1),
}


def scenario_deltas(scenario: str) -> tuple[int, int]:
    try:
        return SCENARIOS[scenario]
    except KeyError:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}") from None


@dataclass(frozen=True)
class PlannerBounds:
    """Closed ranges for teacher size and the two token counts."""

    n_t: tuple[float, float] = (1e6, 1e17)
    d_s: tuple[float, float] = (1e6, 1e17)
    d_t: tuple[float, float] = (1e6, 1e17)

    def __post_init__(self):
        for name in ("n_t", "d_s", "d_t"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"invalid bounds for {name}")


@dataclass
class Plan:
    scenario: str
    N_S: float
    C: float
    D_S: float
    N_T: float
    D_T: float
    L_T: float
    L_S: float
    flops_student: float
    flops_logits: float
    flops_teacher: float
    converged: bool = True
    at_bound: dict = field(default_factory=dict)  # variable -> pinned at a bound

    @property
    def flops(self) -> float:
        return self.flops_student + self.flops_logits + self.flops_teacher

    @property
    def at_boundary(self) -> bool:
        return any(self.at_bound.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flops"] = self.flops
        d["at_bound"] = dict(self.at_bound)
        return d


def _pinned(x, lo, hi, rtol=1e-6) -> bool:
    return bool(abs(math.log(x / lo)) <= rtol or abs(math.log(x / hi)) <= rtol)


def _make_plan(scenario, N_S, C, D_S, N_T, D_T, L_T, L_S, profile, bounds, converged=True,
               free=("n_t", "d_s", "d_t")):
    d_lgt, d_pre = scenario_deltas(scenario)
    fs = float(flops_forward_from_N(N_S, profile))
    ft = float(flops_forward_from_N(N_T, profile))
    flags = {}
    for name, val in (("n_t", N_T), ("d_s", D_S), ("d_t", D_T)):
        flags[name] = name in free and _pinned(val, *getattr(bounds, name))
    return Plan(scenario, N_S, C, D_S, N_T, D_T, L_T, L_S,
                3 * fs * D_S, d_lgt * ft * D_S, 3 * d_pre * ft * D_T, converged, flags)


def distill_flops(N_S, D_S, N_T, D_T, scenario: str,
                  profile: AspectProfile = DEFAULT_PROFILE):
    d_lgt, d_pre = scenario_deltas(scenario)
    fs = flops_forward_from_N(N_S, profile)
    ft = flops_forward_from_N(N_T, profile)
    return 3 * fs * D_S + ft * (d_lgt * D_S + 3 * d_pre * D_T)


def supervised_compute_optimal_teacher(L_T: float, sc: SupervisedCoeffs,
                                       bounds: PlannerBounds = PlannerBounds(),
                                       profile: AspectProfile = DEFAULT_PROFILE):
    """Cheapest (N_T, D_T) in training FLOPs with L(N_T, D_T) == L_T."""
    lo, hi = math.log(bounds.n_t[0]), math.log(bounds.n_t[1])

    def cost(u):
        N = math.exp(u)
        try:
            D = tokens_for_loss(N, L_T, sc)
        except DomainError:
            return math.inf
        if not bounds.d_t[0] <= D <= bounds.d_t[1]:
            return math.inf
        return math.log(flops_forward_from_N(N, profile)) + math.log(D)

    grid = np.linspace(lo, hi, 801)
    vals = np.array([cost(u) for u in grid])
    if not np.isfinite(vals).any():
        raise numkit.InfeasibleError("teacher loss is not reachable within the bounds")
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(cost, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    u = res.x if res.fun <= vals[i] else grid[i]
    N = math.exp(u)
    return N, tokens_for_loss(N, L_T, sc)


def _best_case(N_S, C, dc, sc, bounds, profile):
    D_S = C / (3 * flops_forward_from_N(N_S, profile))
    if not bounds.d_s[0] <= D_S <= bounds.d_s[1]:
        raise numkit.InfeasibleError("budget puts student tokens outside the bounds")
    # teacher losses reachable inside the bounds
    lt_min = supervised_loss(bounds.n_t[1], bounds.d_t[1], sc)
    lt_max = min(10.0, supervised_loss(bounds.n_t[0], bounds.d_t[0], sc))
    bt = best_teacher_loss(N_S, D_S, dc, sc, lo=lt_min, hi=lt_max)
    if bt.L_T <= lt_min * (1 + 1e-12):
        # only the largest teacher on the most tokens reaches this loss
        N_T, D_T = bounds.n_t[1], bounds.d_t[1]
    elif bt.L_T >= supervised_loss(bounds.n_t[0], bounds.d_t[0], sc) * (1 - 1e-12):
        N_T, D_T = bounds.n_t[0], bounds.d_t[0]
    else:
        N_T, D_T = supervised_compute_optimal_teacher(bt.L_T, sc, bounds, profile)
    plan = _make_plan("best-case", N_S, C, D_S, N_T, D_T, bt.L_T, bt.L_S, profile, bounds,
                      free=("n_t", "d_t"))
    # the teacher loss itself may sit at the edge of what the bounds can reach
    if bt.at_boundary:
        plan.at_bound["n_t"] = plan.at_bound["d_t"] = True
    return plan


def _student_tokens(N_S, C, N_T, D_T, scenario, profile):
    d_lgt, d_pre = scenario_deltas(scenario)
    fs = flops_forward_from_N(N_S, profile)
    ft = flops_forward_from_N(N_T, profile)
    return (C - 3 * d_pre * ft * D_T) / (3 * fs + d_lgt * ft)


def _reduced_objective(N_S, C, scenario, dc, sc, bounds, profile):
    """log L_S over (log N_T, log D_T) with D_S taken from the budget.

    Budget-infeasible points get a smooth penalty measured from the nearest
    feasible student token count so the optimizer is pulled back inside.
    """
    lo, hi = bounds.d_s

    def f(x):
        N_T, D_T = math.exp(x[0]), math.exp(x[1])
        D_S = _student_tokens(N_S, C, N_T, D_T, scenario, profile)
        L_T = supervised_loss(N_T, D_T, sc)
        if lo <= D_S <= hi:
            return distillation_log_loss(N_S, D_S, L_T, dc, sc)
        edge = lo if D_S < lo else hi
        gap = abs(D_S - edge) / (C / (3 * flops_forward_from_N(N_S, profile)))
        return distillation_log_loss(N_S, edge, L_T, dc, sc) + 10 * gap + 100 * gap**2
    return f


def distill_optimal(N_S: float, C: float, scenario: str = "best-case",
                    dc: DistillCoeffs = REFERENCE_DISTILL, sc: SupervisedCoeffs = REFERENCE_SUPERVISED,
                    bounds: PlannerBounds = PlannerBounds(),
                    profile: AspectProfile = DEFAULT_PROFILE) -> Plan:
    """Lowest student loss for a student of size N_S under compute budget C."""
    if not (N_S > 0 and C > 0):
        raise DomainError("student size and budget must be positive")
    scenario_deltas(scenario)
    if scenario == "best-case":
        return _best_case(N_S, C, dc, sc, bounds, profile)

    f = _reduced_objective(N_S, C, scenario, dc, sc, bounds, profile)
    box = numkit.Bounds([math.log(bounds.n_t[0]), math.log(bounds.d_t[0])],
                        [math.log(bounds.n_t[1]), math.log(bounds.d_t[1])])
    starts = [np.array([a, b]) for a in np.linspace(box.lower[0], box.upper[0], 3)
              for b in np.linspace(box.lower[1], box.upper[1], 3)]
    res = numkit.minimize_bounded(f, starts, box, budget=1000)
    # exp(log(x)) can overshoot a bound by an ulp
    N_T = min(max(math.exp(res.x[0]), bounds.n_t[0]), bounds.n_t[1])
    D_T = min(max(math.exp(res.x[1]), bounds.d_t[0]), bounds.d_t[1])
    D_S = _student_tokens(N_S, C, N_T, D_T, scenario, profile)
    if not bounds.d_s[0] * (1 - 1e-9) <= D_S <= bounds.d_s[1] * (1 + 1e-9):
        raise numkit.InfeasibleError("no teacher leaves a feasible student token count")
    D_S = min(max(D_S, bounds.d_s[0]), bounds.d_s[1])
    L_T = supervised_loss(N_T, D_T, sc)
    L_S = distillation_loss(N_S, D_S, L_T, dc, sc)
    return _make_plan(scenario, N_S, C, D_S, N_T, D_T, L_T, L_S, profile, bounds, res.converged)


def grid_oracle(N_S: float, C: float, scenario: str, dc=REFERENCE_DISTILL, sc=REFERENCE_SUPERVISED,
                bounds: PlannerBounds = PlannerBounds(), profile=DEFAULT_PROFILE,
                n: int = 40) -> float:
    """Best student loss over a log grid of (D_S, N_T, D_T) points within budget."""
    DS = np.geomspace(*bounds.d_s, n)[:, None, None]
    NT = np.geomspace(*bounds.n_t, n)[None, :, None]
    DT = np.geomspace(*bounds.d_t, n)[None, None, :]
    DS, NT, DT = np.broadcast_arrays(DS, NT, DT)
    ok = distill_flops(N_S, DS, NT, DT, scenario, profile) <= C
    if not ok.any():
        return math.inf
    LT = supervised_loss(NT[ok], DT[ok], sc)
    return float(np.min(distillation_loss(N_S, DS[ok], LT, dc, sc)))


def supervised_optimal(C: float, sc: SupervisedCoeffs = REFERENCE_SUPERVISED,
                       profile: AspectProfile = DEFAULT_PROFILE,
                       n_range: tuple[float, float] = (1e6, 1e17)) -> dict:
    """Compute-optimal supervised (N, D, L) for budget C = 3 F(N) D."""
    if not C > 0:
        raise DomainError("budget must be positive")
    lo, hi = math.log(n_range[0]), math.log(n_range[1])
    f = lambda u: supervised_loss(math.exp(u), C / (3 * flops_forward_from_N(math.exp(u), profile)), sc)
    grid = np.linspace(lo, hi, 801)
    vals = np.array([f(u) for u in grid])
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    u = res.x if res.fun <= vals[i] else grid[i]
    N = math.exp(u)
    D = C / (3 * flops_forward_from_N(N, profile))
    return {"N": N, "D": D, "L": f(u), "at_boundary": i in (0, len(grid) - 1)}


def supervised_compute(N_S: float, target: float, sc: SupervisedCoeffs = REFERENCE_SUPERVISED,
                       profile: AspectProfile = DEFAULT_PROFILE) -> tuple[float, float]:
    """(compute, tokens) a supervised model of size N_S needs to reach ``target``."""
    D = tokens_for_loss(N_S, target, sc)
    return 3 * flops_forward_from_N(N_S, profile) * D, D


def _log_bisect(pred, lo, hi, tol=1e-4):
    """Smallest x in [lo, hi] with pred(x) true, assuming a single switch."""
    a, b = math.log(lo), math.log(hi)
    while b - a > tol:
        m = 0.5 * (a + b)
        if pred(math.exp(m)):
            b = m
        else:
            a = m
    return math.exp(b)


def _min_compute(N_S, target, scenario, dc, sc, bounds, profile, c_guess, c_range):
    """Smallest budget whose optimal plan reaches ``target``; the optimal student
    loss is non-increasing in C so an expanding bracket plus bisection suffices."""
    def reached(C):
        try:
            return distill_optimal(N_S, C, scenario, dc, sc, bounds, profile).L_S <= target
        except numkit.InfeasibleError:
            return False

    lo = hi = min(max(c_guess, c_range[0]), c_range[1])
    if reached(hi):
        while True:
            lo = hi / 2
            if lo < c_range[0]:
                return hi
            if not reached(lo):
                break
            hi = lo
    else:
        while True:
            lo, hi = hi, hi * 2
            if hi > c_range[1]:
                raise DomainError("target loss is not reachable by distillation in the compute range")
            if reached(hi):
                break
    return _log_bisect(reached, lo, hi, tol=1e-3)


def efficiency_ratios(N_S: float, target: float, scenario: str, dc=REFERENCE_DISTILL,
               sc=REFERENCE_SUPERVISED, bounds: PlannerBounds = PlannerBounds(),
               profile=DEFAULT_PROFILE, c_range=(1e15, 1e30)) -> dict:
    """Compute and token ratios of distillation to supervised training at a target loss.

    Tokens for distillation count the student's tokens plus, when the teacher
    is paid for, the teacher's pretraining tokens.
    """
    C_sup, D_sup = supervised_compute(N_S, target, sc, profile)
    C_dist = _min_compute(N_S, target, scenario, dc, sc, bounds, profile, C_sup, c_range)
    plan = distill_optimal(N_S, C_dist, scenario, dc, sc, bounds, profile)
    _, d_pre = scenario_deltas(scenario)
    D_dist = plan.D_S + d_pre * plan.D_T
    return {
        "N_S": N_S, "target": target, "scenario": scenario,
        "C_distill": C_dist, "C_supervised": C_sup, "compute_ratio": C_dist / C_sup,
        "D_distill": D_dist, "D_supervised": D_sup, "data_ratio": D_dist / D_sup,
    }


def break_even(N_S: float, scenario: str = "best-case", dc=REFERENCE_DISTILL,
               sc=REFERENCE_SUPERVISED, bounds: PlannerBounds = PlannerBounds(),
               profile=DEFAULT_PROFILE, c_range=(1e18, 1e28),
               per_decade: int = 8) -> float | None:
    """Smallest compute at which supervised training matches the best distilled student.

    A log-spaced scan finds the first crossing, which bisection then refines.
    Returns None when there is no crossing inside ``c_range``.
    """
    fs3 = 3 * flops_forward_from_N(N_S, profile)

    def sup_wins(C):
        try:
            ls = distill_optimal(N_S, C, scenario, dc, sc, bounds, profile).L_S
        except numkit.InfeasibleError:
            return None
        return supervised_loss(N_S, C / fs3, sc) <= ls

    grid = np.geomspace(*c_range, int(per_decade * math.log10(c_range[1] / c_range[0])) + 1)
    prev = None
    for C in grid:
        w = sup_wins(C)
        if w is None:
            if prev is None:
                continue
            return None
        if w:
            if prev is None:
                return float(C)
            return _log_bisect(lambda c: bool(sup_wins(c)), prev, C, tol=1e-6)
        prev = C
    return None


def teacher_select(N_S: float, budget: float, teachers: list[dict],
                   scenario: str = "teacher-inference", budget_kind: str = "flops",
                   dc=REFERENCE_DISTILL, sc=REFERENCE_SUPERVISED,
                   profile=DEFAULT_PROFILE) -> tuple[int, float, list[dict]]:
    """Pick the existing teacher (dicts with ``N_T`` and ``L_T``) giving the best student.

    Teacher pretraining is sunk. Under a token budget the teacher size is free;
    under a FLOP budget the student tokens are ``C / (3F(N_S) + d_lgt F(N_T))``.
    Returns (index of the best teacher, its predicted L_S, one row per teacher).
    """
    if not teachers:
        raise ValueError("teacher list is empty")
    if budget_kind not in ("flops", "tokens"):
        raise ValueError("budget_kind must be 'flops' or 'tokens'")
    d_lgt, _ = scenario_deltas(scenario)
    fs = flops_forward_from_N(N_S, profile)
    rows = []
    for t in teachers:
        N_T, L_T = float(t["N_T"]), float(t["L_T"])
        if budget_kind == "tokens":
            D_S = budget
        else:
            D_S = budget / (3 * fs + d_lgt * flops_forward_from_N(N_T, profile))
        row = dict(t)
        row.update(N_T=N_T, L_T=L_T, D_S=float(D_S),
                   L_S=distillation_loss(N_S, D_S, L_T, dc, sc))
        rows.append(row)
    best = min(range(len(rows)), key=lambda i: rows[i]["L_S"])
    return best, rows[best]["L_S"], rows


def sweep(student_sizes, budgets, scenarios, dc=REFERENCE_DISTILL, sc=REFERENCE_SUPERVISED,
          bounds: PlannerBounds = PlannerBounds(), profile=DEFAULT_PROFILE) -> list[dict]:
    """Plans over a grid; infeasible cells are reported with an error field."""
    rows = []
    for scen in scenarios:
        for N_S in student_sizes:
            for C in budgets:
                try:
                    rows.append(distill_optimal(N_S, C, scen, dc, sc, bounds, profile).to_dict())
                except numkit.InfeasibleError as e:
                    rows.append({"scenario": scen, "N_S": N_S, "C": C, "error": str(e)})
    return rows
