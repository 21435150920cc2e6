"""Acceptance suite: ten end-to-end criteria, one pass/fail line each.

Run directly with ``python tests/test_acceptance.py`` or through pytest, which
also prints the summary lines at the end of the session. Set
``ACCEPTANCE_FULL=1`` to use 4096 bootstrap resamples instead of the 256
resample smoke variant.
"""

from __future__ import annotations

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from distill_scaling import accounting, capacity_gap, fitting, io, kernels, laws, optimal

SC, DC = laws.REFERENCE_SUPERVISED, laws.REFERENCE_DISTILL
ROOT = Path(__file__).resolve().parents[1]
RESULTS: dict[int, str] = {}


def _record(n: int, ok: bool, detail: str, t0: float) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail} ({time.perf_counter() - t0:.1f}s)"
    RESULTS[n] = line
    print(line)
    return ok


def _rel(a, b):
    return abs(a / b - 1)


# -- 1 ----------------------------------------------------------------------

def criterion_1():
    """Accounting table: parameters, forward FLOPs and both approximation errors."""
    t0 = time.perf_counter()
    ref = {r["name"]: r for r in accounting.load_model_sizes()}
    bad = []
    worst = [0.0, 0.0, 0.0, 0.0]
    for row in accounting.model_size_rows():
        r = ref[row["name"]]
        e = [_rel(row["N"], r["n_params_b"] * 1e9),
             _rel(row["C_fwd"], r["c_fwd_b"] * 1e9),
             abs(100 * row["rel_err_2N"] - r["err_2n_pct"]),
             abs(100 * row["rel_err_sigma"] - r["err_sigma_pct"])]
        worst = [max(w, x) for w, x in zip(worst, e)]
        for name, x, tol in zip(("N", "C_fwd", "err_2N", "err_sigma"), e, (0.005, 0.01, 0.15, 0.15)):
            if x > tol:
                bad.append(f"{row['name']}:{name}")
    n_rows = len(ref)
    ok = not bad and n_rows == 33 and time.perf_counter() - t0 < 1
    detail = (f"{n_rows} rows; worst N {worst[0]:.2%}, C_fwd {worst[1]:.2%}, "
              f"2N err {worst[2]:.3f}pp, sigma err {worst[3]:.3f}pp")
    if bad:
        detail += f"; out of tolerance: {', '.join(bad)}"
    return _record(1, ok, detail, t0)


# -- 2 ----------------------------------------------------------------------

def criterion_2():
    t0 = time.perf_counter()
    random_teacher = abs(laws.distillation_loss(1e9, 2e10, 1e6, DC, SC) - 1e6) / 1e6
    huge_student = laws.distillation_loss(1e30, 1e30, 2.0, DC, SC) - 2.0
    t = laws.supervised_loss(1e9, 2e10, SC)
    mid = abs(laws.capacity_gap_factor(DC.d1 * t, t, DC) / 2 ** (-DC.c1 * DC.f1) - 1)
    ok = random_teacher < 1e-6 and huge_student < 1e-6 and mid < 1e-10
    ok = ok and time.perf_counter() - t0 < 1
    return _record(2, ok, f"random teacher {random_teacher:.1e}, infinite student "
                          f"{huge_student:.1e}, midpoint identity {mid:.1e}", t0)


# -- 3 ----------------------------------------------------------------------

def criterion_3():
    t0 = time.perf_counter()
    worst = 0.0
    for N in np.geomspace(1e8, 1e11, 20):
        bt = laws.best_teacher_loss(float(N), math.inf, DC, SC)
        worst = max(worst, _rel(bt.L_S, laws.supervised_limit(float(N), SC)))
    ok = worst < 0.02 and time.perf_counter() - t0 < 10
    return _record(3, ok, f"max deviation from the supervised limit {worst:.2%}", t0)


# -- 4 ----------------------------------------------------------------------

def _errors(fit, true, keys):
    f, t = fit.to_dict(), true.to_dict()
    return {k: abs(f[k] / t[k] - 1) for k in keys}


def criterion_4():
    t0 = time.perf_counter()
    parts, ok = [], True

    sup = io.load_runs(io.fixture_path("synthetic_supervised.csv"), "supervised").records
    e = _errors(fitting.fit_supervised(sup).coefficients, SC, ["E", "alpha", "beta", "gamma"])
    good = e["E"] < 0.02 and max(e["alpha"], e["beta"], e["gamma"]) < 0.05
    ok &= good
    parts.append("supervised noisy " + " ".join(f"{k} {v:.1%}" for k, v in e.items()))

    dist = io.load_runs(io.fixture_path("synthetic_distill.csv"), "distill").records
    e = _errors(fitting.fit_distillation(dist, SC).coefficients, DC, ["alpha", "beta", "gamma", "d1"])
    good = max(e.values()) < 0.07
    ok &= good
    parts.append("distill noisy " + " ".join(f"{k} {v:.1%}" for k, v in e.items()))

    clean_s = fitting.fit_supervised(fitting.synthetic_supervised(noise=0.0))
    clean_d = fitting.fit_distillation(fitting.synthetic_distill(noise=0.0), SC)
    es = max(_errors(clean_s.coefficients, SC, SC.to_dict()).values())
    ed = max(_errors(clean_d.coefficients, DC, DC.to_dict()).values())
    ok &= es < 1e-4 and ed < 1e-4
    parts.append(f"noise-free max {max(es, ed):.1e}")
    ok &= time.perf_counter() - t0 < 600
    return _record(4, ok, "; ".join(parts), t0)


# -- 5 ----------------------------------------------------------------------

def criterion_5(trials: int = 50, resamples: int | None = None):
    t0 = time.perf_counter()
    full = os.environ.get("ACCEPTANCE_FULL") == "1"
    resamples = resamples or (4096 if full else 256)
    keys = ["E", "A", "B", "alpha", "beta", "gamma"]
    hits = np.zeros(len(keys))
    joint = 0
    for t in range(trials):
        runs = fitting.synthetic_supervised(noise=0.005, seed=1000 + t)
        # 16 random starts reach the 256-start optimum on these designs
        cfg = fitting.FitConfig(max_starts=16, bootstrap=resamples, level=0.9, seed=t)
        iv = fitting.fit_supervised(runs, cfg).intervals
        cover = np.array([iv[k][0] <= getattr(SC, k) <= iv[k][1] for k in keys])
        hits += cover
        joint += cover.all()
    rate = hits / trials
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(rate >= 0.85)) and (full or elapsed < 120)
    detail = (f"{resamples} resamples, {trials} trials; coverage "
              + " ".join(f"{k} {r:.2f}" for k, r in zip(keys, rate))
              + f"; all six at once {joint / trials:.2f}")
    return _record(5, ok, detail, t0)


# -- 6 ----------------------------------------------------------------------

def criterion_6():
    t0 = time.perf_counter()
    problems = []
    # best case tokens
    for N_S in (3e8, 1e9, 3e9, 1e10):
        for C in (1e20, 1e21, 1e22, 1e23):
            p = optimal.distill_optimal(N_S, C)
            if p.D_S != C / (3 * accounting.flops_forward_from_N(N_S)):
                problems.append(f"best-case D_S at {N_S:.0e},{C:.0e}")
    # teacher inference pins teacher tokens
    for C in (1e20, 1e21, 1e22, 1e23):
        p = optimal.distill_optimal(1e9, C, "teacher-inference")
        if p.D_T != 1e17:
            problems.append(f"teacher-inference D_T {p.D_T:.3e} at C={C:.0e}")
    # teacher pretraining keeps a fixed teacher token ratio
    ratios = [optimal.distill_optimal(1e9, C, "teacher-pretraining") for C in (1e20, 1e21, 1e22, 1e23)]
    ratios = [p.D_T / p.N_T for p in ratios]
    spread = max(ratios) / min(ratios) - 1
    if spread > 0.1:
        problems.append(f"teacher-pretraining D_T/N_T spread {spread:.1%}")
    # grid oracle over 16 cells
    worst = -math.inf
    for scenario in optimal.SCENARIOS:
        for N_S, C in ((1e9, 1e21), (1e9, 1e23), (1e10, 1e21), (1e10, 1e23)):
            p = optimal.distill_optimal(N_S, C, scenario)
            g = optimal.grid_oracle(N_S, C, scenario, n=40)
            worst = max(worst, p.L_S / g - 1)
    if worst > 0.01:
        problems.append(f"grid oracle beats solver by {worst:.2%}")
    ok = not problems and time.perf_counter() - t0 < 300
    detail = (f"D_T/N_T {min(ratios):.2f}-{max(ratios):.2f}; worst solver-minus-oracle "
              f"{worst:+.2e} relative")
    if problems:
        detail += "; " + "; ".join(problems)
    return _record(6, ok, detail, t0)


# -- 7 ----------------------------------------------------------------------

PROBE_SIZES = (3e8, 1e9, 3e9)
PROBE_OFFSETS = (0.05, 0.1, 0.2)


def criterion_7():
    t0 = time.perf_counter()
    sizes = (3e8, 1e9, 3e9, 1e10)
    be = [optimal.break_even(N) for N in sizes]
    increasing = all(b is not None for b in be) and all(x < y for x, y in zip(be, be[1:]))
    low = []
    for N in PROBE_SIZES:
        for off in PROBE_OFFSETS:
            target = laws.supervised_limit(N, SC) + off
            r = optimal.efficiency_ratios(N, target, "teacher-pretraining")
            if r["compute_ratio"] < 1:
                low.append(f"{N:.0e}/+{off}: {r['compute_ratio']:.3f}")
    ok = increasing and not low and time.perf_counter() - t0 < 120
    detail = "break-even " + ", ".join(
        f"{N:.0e}->{b:.3g}" if b else f"{N:.0e}->none" for N, b in zip(sizes, be))
    detail += "; " + ("increasing" if increasing else "not increasing")
    detail += "; pretraining compute ratios " + ("all >= 1" if not low else "below 1 at " + ", ".join(low))
    return _record(7, ok, detail, t0)


# -- 8 ----------------------------------------------------------------------

def criterion_8():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    u_ok = True
    for _ in range(200):
        size = int(rng.integers(10, 400))
        T = float(rng.uniform(1, 8))
        D = float(rng.uniform(0.5, T))
        setup = capacity_gap.KernelSetup(rng.uniform(-1, 1, size), T, D)
        m, n = (int(v) for v in rng.integers(1, size + 1, 2))
        te, se = capacity_gap.errors_by_projection(setup, m, n)
        worst = max(worst, abs(te - capacity_gap.teacher_error(setup, m)),
                    abs(se - capacity_gap.student_error(setup, m, n)))
        e = capacity_gap.u_shape_scan(setup, n, range(1, size + 1))
        u_ok &= bool(np.all(np.diff(e[:n]) <= 0) and np.all(np.diff(e[n - 1:]) >= 0))
    setup = capacity_gap.random_setup(1000, 5.0, 4.5, seed=0)
    minima = {}
    for n in (50, 100, 200, 400):
        e = capacity_gap.u_shape_scan(setup, n, range(1, 1001))
        minima[n] = int(np.argmin(e)) + 1
    interior = all(1 < m < 1000 and abs(m - n) <= 0.1 * n for n, m in minima.items())
    ok = worst < 1e-8 and u_ok and interior and time.perf_counter() - t0 < 30
    return _record(8, ok, f"oracle gap {worst:.1e}; U-shape on every draw {u_ok}; "
                          f"argmin m for n=50,100,200,400: {list(minima.values())}", t0)


# -- 9 ----------------------------------------------------------------------

MAPPING_EXAMPLES = [
    ([2, 0, 2, 0, 2, 1, 0, 0], [0, 1, 0, 0, 0, 0, 0, 0], 1),
    ([1, 1, 2, 0, 1, 2, 0, 0], [0, 0, 0, 0, 0, 1, 0, 0], 2),
    ([0, 1, 2, 2, 2, 2, 1, 2], [0, 1, 0, 0, 0, 0, 0, 0], 6),
]


def criterion_9():
    t0 = time.perf_counter()
    got = [capacity_gap.mapping_label(c + h) for c, h, _ in MAPPING_EXAMPLES]
    want = [w for _, _, w in MAPPING_EXAMPLES]
    return _record(9, got == want, f"labels {got}, expected {want}", t0)


# -- 10 ---------------------------------------------------------------------

def criterion_10():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    h = 1e-5
    grad_err = 0.0
    for _ in range(50):
        zt, zs = rng.normal(size=(2, 8)) * 2
        tau = float(rng.uniform(0.5, 4))
        g = kernels.kd_loss_grad(zt, zs, tau)
        fd = np.array([(kernels.kd_loss(zt, zs + h * e, tau) - kernels.kd_loss(zt, zs - h * e, tau))
                       / (2 * h) for e in np.eye(8)])
        grad_err = max(grad_err, float(np.max(np.abs(g - fd))))
    sum_err = 0.0
    for _ in range(500):
        p = rng.dirichlet(np.full(50, 0.3))
        sum_err = max(sum_err, abs(kernels.truncate(p, "top-p", float(rng.uniform(0.05, 1))).sum() - 1),
                      abs(kernels.truncate(p, "top-k", int(rng.integers(1, 51))).sum() - 1))
    rkl_min = min(kernels.reverse_kl_loss(*(rng.normal(size=(2, 10)) * 3), float(rng.uniform(0.5, 2)))
                  for _ in range(1000))
    z = rng.normal(size=10)
    rkl_eq = kernels.reverse_kl_loss(z, z)
    ece_a = kernels.ece([0.8, 0.8, 0.6, 0.6], [1, 0, 1, 1], 5)[0]
    ece_b = kernels.ece([1.0, 1.0], [1, 1])[0]
    docs = subprocess.run([sys.executable, str(ROOT / "scripts" / "docs_check.py")],
                          capture_output=True, text=True)
    ok = (grad_err <= 1e-6 and sum_err <= 1e-12 and rkl_min >= 0 and rkl_eq == 0
          and abs(ece_a - 0.35) < 1e-12 and ece_b == 0 and docs.returncode == 0)
    return _record(10, ok, f"kd grad err {grad_err:.1e}; truncation sum err {sum_err:.1e}; "
                           f"min reverse KL {rkl_min:.2e}; ECE {ece_a:.4f}/{ece_b}; "
                           f"docs check: {docs.stdout.strip()}", t0)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("n", range(1, 11))
def test_criterion(n):
    assert CRITERIA[n - 1](), RESULTS[n]


def main() -> int:
    ok = [c() for c in CRITERIA]
    print(f"{sum(ok)}/{len(ok)} criteria pass")
    return 0 if all(ok) else 1


if __name__ == "__main__":
    sys.exit(main())
