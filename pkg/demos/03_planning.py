"""
Compute-optimal distillation
============================

Plan a distillation run under a FLOP budget for each cost scenario and find
where supervised training catches up.
"""

# %%
from distill_scaling import laws, optimal

# %% one student, one budget, four ways of counting the teacher
for scenario in optimal.SCENARIOS:
    p = optimal.distill_optimal(1e9, 1e21, scenario)
    print(f"{scenario:>30}: L_S={p.L_S:.4f} D_S={p.D_S:.3g} N_T={p.N_T:.3g} D_T={p.D_T:.3g}")

# %% supervised baseline at the same budget
print("supervised:", optimal.supervised_optimal(1e21))

# %% compute at which supervised training matches the best distilled student
for N in (3e8, 1e9, 3e9, 1e10):
    print(f"N_S={N:.0e}: break-even C = {optimal.break_even(N):.3g}")

# %% picking among teachers that already exist
teachers = [{"N_T": 1e9, "L_T": 2.45}, {"N_T": 7e9, "L_T": 2.1}, {"N_T": 7e10, "L_T": 1.85}]
idx, ls, rows = optimal.teacher_select(1e9, 1e21, teachers)
print("best teacher", teachers[idx], "predicted student loss", ls)
