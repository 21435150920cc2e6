import math

import numpy as np
import pytest

from distill_scaling import accounting, laws, numkit, optimal

BARE = accounting.AspectProfile(n_ctx=0, n_vocab=0)  # F(N) = 2N


def test_flops_by_hand():
    # 3*2e9*1e10 + 2*2e9*(1e10 + 3*4e10)
    v = optimal.distill_flops(1e9, 1e10, 2e9, 4e10, "teacher-pretraining+inference", BARE)
    assert v == pytest.approx(6e19 + 5.2e20, rel=1e-14)
    assert optimal.distill_flops(1e9, 1e10, 2e9, 4e10, "best-case", BARE) == 6e19


def test_unknown_scenario():
    with pytest.raises(ValueError):
        optimal.distill_flops(1e9, 1e10, 1e9, 1e10, "free-lunch")


def test_all_terms_positive():
    p = optimal.distill_optimal(1e9, 1e21, "teacher-pretraining+inference")
    assert p.flops_student > 0 and p.flops_logits > 0 and p.flops_teacher > 0
    assert p.flops == pytest.approx(1e21, rel=1e-9)


def test_supervised_optimal(sc):
    ratios, prev = [], math.inf
    for C in (1e19, 1e20, 1e21, 1e22, 1e23, 1e24):
        r = optimal.supervised_optimal(C, sc)
        assert 3 * accounting.flops_forward_from_N(r["N"]) * r["D"] == pytest.approx(C, rel=1e-6)
        Ns = np.geomspace(1e6, 1e14, 400)
        Ds = C / (3 * accounting.flops_forward_from_N(Ns))
        assert r["L"] <= np.min(laws.supervised_loss(Ns, Ds, sc)) * 1.01
        assert r["L"] <= prev
        prev = r["L"]
        ratios.append(r["D"] / r["N"])
    assert max(ratios) / min(ratios) < 2


def test_best_case_tokens_exact():
    C = 1e21
    p = optimal.distill_optimal(1e9, C)
    assert p.D_S == C / (3 * accounting.flops_forward_from_N(1e9))
    assert p.flops_teacher == 0 and p.flops_logits == 0
    # the reported teacher is supervised and reaches L_T
    assert laws.supervised_loss(p.N_T, p.D_T, laws.REFERENCE_SUPERVISED) == pytest.approx(p.L_T, rel=1e-9)


def test_teacher_inference_pins_teacher_tokens():
    for C in (1e20, 1e22):
        p = optimal.distill_optimal(1e9, C, "teacher-inference")
        assert p.D_T == 1e17 and p.at_bound["d_t"]


def test_teacher_pretraining_ratio_constant():
    r = [p.D_T / p.N_T for p in (optimal.distill_optimal(1e9, C, "teacher-pretraining")
                                 for C in (1e20, 1e21, 1e22, 1e23))]
    assert max(r) / min(r) < 1.1


@pytest.mark.parametrize("scenario", list(optimal.SCENARIOS))
def test_grid_oracle(scenario):
    p = optimal.distill_optimal(1e9, 1e21, scenario)
    assert p.L_S <= optimal.grid_oracle(1e9, 1e21, scenario, n=25) * 1.01


def test_more_compute_never_hurts():
    for s in optimal.SCENARIOS:
        a = optimal.distill_optimal(1e9, 1e21, s).L_S
        b = optimal.distill_optimal(1e9, 2e21, s).L_S
        assert b <= a * (1 + 1e-9)


def test_infeasible_budget():
    with pytest.raises(numkit.InfeasibleError):
        optimal.distill_optimal(1e9, 1e10)
    with pytest.raises(laws.DomainError):
        optimal.distill_optimal(1e9, -1.0)


def test_teacher_select():
    i, _, _ = optimal.teacher_select(1e9, 1e21, [{"N_T": 3e9, "L_T": 2.2}])
    assert i == 0
    i, _, rows = optimal.teacher_select(1e9, 1e21, [{"N_T": 7e9, "L_T": 2.2},
                                                    {"N_T": 3e9, "L_T": 2.2}])
    assert i == 1 and rows[1]["D_S"] > rows[0]["D_S"]
    teachers = [{"N_T": n, "L_T": lt} for n, lt in ((1e9, 2.6), (3e9, 2.3), (7e9, 2.1), (3e10, 1.9))]
    for kind, budget in (("flops", 1e21), ("tokens", 1e11)):
        i, ls, rows = optimal.teacher_select(1e9, budget, teachers, budget_kind=kind)
        assert ls == min(r["L_S"] for r in rows) == rows[i]["L_S"]
    with pytest.raises(ValueError):
        optimal.teacher_select(1e9, 1e21, [])


def test_break_even_increases_from_small_to_large_student():
    assert optimal.break_even(1e10) > optimal.break_even(3e8)


def test_break_even_matches_scan():
    c = optimal.break_even(1e9)
    fs3 = 3 * accounting.flops_forward_from_N(1e9)
    for C, wins in ((c * 0.9, False), (c * 1.1, True)):
        ls = optimal.distill_optimal(1e9, C).L_S
        assert (laws.supervised_loss(1e9, C / fs3, laws.REFERENCE_SUPERVISED) <= ls) is wins


def test_break_even_when_distillation_never_helps():
    weak = laws.DistillCoeffs(A=1e12, B=1e12, alpha=0.1, beta=0.1, gamma=1.0,
                              c0=1e-3, c1=1e-3, f1=1.0, d1=1.0)
    assert optimal.break_even(1e9, dc=weak, c_range=(1e18, 1e24)) == 1e18


def test_efficiency_ratio_inverse_solve(sc):
    target = laws.supervised_limit(1e9, sc) + 0.1
    r = optimal.efficiency_ratios(1e9, target, "teacher-pretraining")
    assert r["compute_ratio"] >= 1
    assert optimal.distill_optimal(1e9, r["C_distill"], "teacher-pretraining").L_S <= target
    assert optimal.distill_optimal(1e9, r["C_distill"] / 1.02, "teacher-pretraining").L_S > target
    C_sup, _ = optimal.supervised_compute(1e9, target, sc)
    fs3 = 3 * accounting.flops_forward_from_N(1e9)
    assert laws.supervised_loss(1e9, C_sup / fs3, sc) == pytest.approx(target, rel=1e-10)


def test_efficiency_unreachable_target(sc):
    with pytest.raises(laws.DomainError):
        optimal.efficiency_ratios(1e9, laws.supervised_limit(1e9, sc) - 0.01, "best-case")


def test_sweep_reports_infeasible_cells():
    rows = optimal.sweep([1e9], [1e10, 1e21], ["best-case"])
    assert "error" in rows[0] and rows[1]["L_S"] > 0
