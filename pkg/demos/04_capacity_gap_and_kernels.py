"""
Capacity gap and loss kernels
=============================

The kernel-regression toy where a bigger teacher makes a worse student, the
mapping-task labels, and the token-level distillation losses.
"""

# %%
import numpy as np

from distill_scaling import capacity_gap, kernels

# %% student error over teacher capacity m for a few student sizes
setup = capacity_gap.random_setup(1000, T=5.0, D=4.5, seed=0)
for n in (50, 100, 200, 400):
    err = capacity_gap.u_shape_scan(setup, n, range(1, 1001))
    print(f"n={n}: best teacher capacity m={np.argmin(err) + 1}, error {err.min():.3f}")

# %% mapping task labels
print(capacity_gap.mapping_label("2020210001000000"))
print(capacity_gap.mapping_label([0, 1, 2, 2, 2, 2, 1, 2, 0, 1, 0, 0, 0, 0, 0, 0]))

# %% distillation losses on random logits
rng = np.random.default_rng(0)
zt, zs = rng.normal(size=(2, 4, 16))
x = rng.integers(0, 16, 4)
print("kd", kernels.kd_loss(zt, zs, tau=2.0))
print("reverse kl", kernels.reverse_kl_loss(zt, zs))
print("mixed", kernels.student_loss(x, zt, zs, kernels.LossParams(tau=1.0, lam=0.5, lam_z=1e-4)))

# %% calibration
conf = rng.uniform(size=1000)
correct = rng.uniform(size=1000) < conf
print("ece", kernels.ece(conf, correct)[0])
print("bytes per position of stored logits", kernels.logit_storage_bytes())
