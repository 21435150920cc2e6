import math

import mpmath as mp
import numpy as np
import pytest

from distill_scaling import laws

# frozen from a 50-digit mpmath evaluation (see test_goldens_match_mpmath)
GOLDEN_SUPERVISED = 2.374692248353496  # L(1e9, 2e10)
GOLDEN_DISTILL = 2.276810580750949  # L_S(1e9, 2e10, L_T=2)


def _mp_supervised(N, D, c):
    mp.mp.dps = 50
    E, A, B, a, b, g = (mp.mpf(repr(x)) for x in (c.E, c.A, c.B, c.alpha, c.beta, c.gamma))
    return E + (A / mp.mpf(N) ** a + B / mp.mpf(D) ** b) ** g


def _mp_distill(N, D, LT, dc, sc):
    t = _mp_supervised(N, D, sc)
    A, B, a, b, g, c0, c1, f1, d1 = (mp.mpf(repr(v)) for v in dc.to_dict().values())
    LT = mp.mpf(LT)
    gap = (1 + (LT / (d1 * t)) ** (1 / f1)) ** (-c1 * f1)
    return LT + LT ** (-c0) * gap * (A / mp.mpf(N) ** a + B / mp.mpf(D) ** b) ** g


def test_goldens_match_mpmath(sc, dc):
    assert float(_mp_supervised(1e9, 2e10, sc)) == pytest.approx(GOLDEN_SUPERVISED, rel=1e-14)
    assert float(_mp_distill(1e9, 2e10, 2.0, dc, sc)) == pytest.approx(GOLDEN_DISTILL, rel=1e-14)


def test_supervised_golden(sc):
    assert laws.supervised_loss(1e9, 2e10, sc) == pytest.approx(GOLDEN_SUPERVISED, rel=1e-13)


def test_distill_golden(sc, dc):
    assert laws.distillation_loss(1e9, 2e10, 2.0, dc, sc) == pytest.approx(GOLDEN_DISTILL, rel=1e-13)


def test_log_and_linear_paths_agree(sc, dc):
    N, D = np.meshgrid(np.geomspace(1e7, 1e12, 20), np.geomspace(1e8, 1e13, 20))
    a = laws.supervised_loss(N, D, sc)
    b = laws.supervised_loss_linear(N, D, sc)
    assert np.max(np.abs(a / b - 1)) < 1e-12
    for lt in (1.5, 2.0, 3.0):
        a = laws.distillation_loss(N, D, lt, dc, sc)
        b = laws.distillation_loss_linear(N, D, lt, dc, sc)
        assert np.max(np.abs(a / b - 1)) < 1e-12


def test_supervised_limits(sc):
    assert laws.supervised_limit(1e9, sc) == pytest.approx(laws.supervised_loss(1e9, 1e30, sc), abs=1e-6)
    assert laws.supervised_limit(1e60, sc) == pytest.approx(sc.E, abs=1e-6)
    Ns = np.geomspace(1e6, 1e13, 50)
    assert np.all(np.diff(laws.supervised_limit(Ns, sc)) < 0)


def test_supervised_monotone(sc):
    g = np.geomspace(1e6, 1e14, 40)
    assert np.all(np.diff(laws.supervised_loss(g, 1e10, sc)) < 0)
    assert np.all(np.diff(laws.supervised_loss(1e9, g, sc)) < 0)
    assert np.all(laws.supervised_loss(g, g, sc) > sc.E)


def test_domain_errors(sc, dc):
    with pytest.raises(laws.DomainError):
        laws.supervised_loss(0, 1e9, sc)
    with pytest.raises(laws.DomainError):
        laws.supervised_loss(1e9, -1, sc)
    with pytest.raises(laws.DomainError):
        laws.distillation_loss(1e9, 1e9, 0.0, dc, sc)


def test_coefficient_validation():
    with pytest.raises(ValueError):
        laws.SupervisedCoeffs(E=-1, A=1, B=1, alpha=1, beta=1, gamma=1)
    with pytest.raises(ValueError):
        laws.DistillCoeffs(1, 1, 1, 1, 1, 1, float("nan"), 1, 1)


def test_exponents(sc):
    assert sc.a == pytest.approx(0.431 / 0.839)
    assert sc.a + sc.b == pytest.approx(1.0)


def test_random_teacher_gives_random_student(sc, dc):
    L = laws.distillation_loss(1e9, 2e10, 1e6, dc, sc)
    assert abs(L - 1e6) / 1e6 < 1e-6


def test_infinite_student(sc, dc):
    assert laws.distillation_loss(1e30, 1e30, 2.0, dc, sc) - 2.0 < 1e-6


def test_gap_factor_midpoint_identity(sc, dc):
    t = laws.supervised_loss(1e9, 2e10, sc)
    f = laws.capacity_gap_factor(dc.d1 * t, t, dc)
    assert f == pytest.approx(2 ** (-dc.c1 * dc.f1), rel=1e-10)


def test_distillation_limit(sc, dc):
    for lt in (1.8, 2.2, 3.0):
        assert laws.distillation_limit(1e9, lt, dc, sc) == pytest.approx(
            laws.distillation_loss(1e9, 1e30, lt, dc, sc), rel=1e-8)
    assert laws.distillation_limit(1e9, 1e5, dc, sc) == pytest.approx(1e5, rel=1e-8)


def test_infinite_data_consistency(sc, dc):
    bt = laws.best_teacher_loss(1e9, math.inf, dc, sc)
    assert bt.L_S == pytest.approx(laws.supervised_limit(1e9, sc), rel=0.02)


def test_best_teacher_vs_dense_scan(sc, dc):
    bt = laws.best_teacher_loss(1e9, 2e10, dc, sc)
    grid = np.linspace(sc.E * 1.001, 8, 100_000)
    i = np.argmin(laws.distillation_loss(1e9, 2e10, grid, dc, sc))
    assert abs(grid[i] - bt.L_T) <= 1e-3
    assert not bt.at_boundary
    for d in (-0.1, 0.1):
        assert laws.distillation_loss(1e9, 2e10, bt.L_T + d, dc, sc) > bt.L_S


def test_best_teacher_decreases_with_student_size(sc, dc):
    lts = [laws.best_teacher_loss(n, 1e11, dc, sc).L_T for n in (1e8, 1e9, 1e10)]
    assert lts[0] > lts[1] > lts[2]


def test_single_local_minimum_in_teacher_loss(sc, dc):
    grid = np.arange(sc.E + 1e-3, 6, 1e-3)
    for N in (1e8, 1e9, 1e10):
        for D in (1e9, 1e10, 1e11):
            v = laws.distillation_loss(N, D, grid, dc, sc)
            interior = (v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])
            assert interior.sum() == 1


def test_teacher_benefit_above_gap(sc, dc):
    bt = laws.best_teacher_loss(1e9, 2e10, dc, sc)
    lts = np.linspace(bt.L_T + 0.01, 5, 50)
    h = 1e-6
    d = (laws.distillation_loss(1e9, 2e10, lts + h, dc, sc)
         - laws.distillation_loss(1e9, 2e10, lts - h, dc, sc))
    assert np.all(d > 0)


def test_tokens_for_loss_inverts(sc):
    D = laws.tokens_for_loss(1e9, 2.5, sc)
    assert laws.supervised_loss(1e9, D, sc) == pytest.approx(2.5, rel=1e-12)
    with pytest.raises(laws.DomainError):
        laws.tokens_for_loss(1e9, laws.supervised_limit(1e9, sc) - 0.01, sc)


def test_coeff_round_trip(sc, dc):
    assert laws.SupervisedCoeffs.from_dict(sc.to_dict()) == sc
    assert laws.DistillCoeffs.from_dict(dc.to_dict()) == dc
