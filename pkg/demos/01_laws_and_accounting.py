"""
Scaling laws and FLOP accounting
================================

Evaluate the supervised and distillation laws with the reference
coefficients and compare exact forward FLOPs with the closed form.
"""

# %%
import numpy as np

from distill_scaling import accounting, laws

sc, dc = laws.REFERENCE_SUPERVISED, laws.REFERENCE_DISTILL

# %% supervised loss for a 1B model at 20 tokens per parameter
print("L(1e9, 2e10) =", laws.supervised_loss(1e9, 2e10, sc))
print("data limit    =", laws.supervised_limit(1e9, sc))

# %% student loss against teacher loss: the capacity gap shows up as a U
teacher_losses = np.linspace(1.6, 3.5, 12)
student = laws.distillation_loss(1e9, 2e10, teacher_losses, dc, sc)
for lt, ls in zip(teacher_losses, student):
    print(f"L_T={lt:.2f}  L_S={ls:.4f}")
best = laws.best_teacher_loss(1e9, 2e10, dc, sc)
print("best teacher loss", best.L_T, "gives", best.L_S)

# %% exact accounting for a few fixed-aspect models
for row in accounting.model_size_rows()[::8]:
    print(f"{row['name']:>6}  N={row['N']:.4g}  C_fwd={row['C_fwd']:.4g}  "
          f"2N err={row['rel_err_2N']:+.2%}  closed-form err={row['rel_err_sigma']:+.2%}")
