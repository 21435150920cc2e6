"""
Fitting the laws to runs
========================

Generate synthetic runs from known coefficients, fit them back, and put
bootstrap intervals on the supervised fit.
"""

# %%
from distill_scaling import fitting, laws

sc, dc = laws.REFERENCE_SUPERVISED, laws.REFERENCE_DISTILL

# %% supervised: 73 noisy runs
runs = fitting.synthetic_supervised(noise=0.005, seed=0)
fit = fitting.fit_supervised(runs, fitting.FitConfig(bootstrap=64))
print(fit.coefficients)
for name, (lo, hi) in fit.intervals.items():
    print(f"{name:>6}: [{lo:.4g}, {hi:.4g}]")

# %% distillation: 697 runs, supervised coefficients held fixed
druns = fitting.synthetic_distill(noise=0.005, seed=1)
dfit = fitting.fit_distillation(druns, sc)
print(dfit.coefficients)

# %% c1 and d1 trade off along a flat valley at this noise level; pinning c1
# recovers d1
pinned = fitting.fit_distillation(druns, sc, fitting.FitConfig(fixed={"c1": dc.c1}))
print("d1 free:", dfit.coefficients.d1, " d1 with c1 pinned:", pinned.coefficients.d1)
