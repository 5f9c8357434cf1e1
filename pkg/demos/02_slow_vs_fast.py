"""Linear fronts against exponential fronts.

When m(p-1) >= 1 the equation has travelling waves and compact data spread
at a finite speed c*.  The minimal speed comes from shooting on the wave
ODE; a compact datum then settles to that speed.  With m(p-1) < 1 the same
experiment gives a front whose ln r, not r, grows linearly.
"""
import numpy as np

from fastkpp import (
    DiffusionParams, DoublyNonlinear, Full, SolverConfig, build_grid,
    critical_speed_shooting, fit_exp_rate, fit_linear_speed, front_r_max,
    logistic, make_plateau_tail, run, sigma_star, track_levels,
)

f = logistic()

# --- classical KPP, m = 1, p = 2: c* = 2
tw = critical_speed_shooting(1.0, 2.0, f, tol=1e-3)
print(f"shooting: c* in [{tw.bracket[0]:.4f}, {tw.bracket[1]:.4f}]")
for m, p in ((2.0, 2.0), (1.5, 2.0), (1.0, 3.0)):
    print(f"  m = {m}, p = {p}: c* = {critical_speed_shooting(m, p, f).c_star:.4f}")

T = 25.0
grid = build_grid("Uniform", r_max=20 + 3 * T, cells=950)
cfg = SolverConfig(DoublyNonlinear(1.0, 2.0), T, snapshot_times=np.linspace(0, T, 51),
                   reaction=Full(f))
res = run(lambda r: np.where(r <= 1.0, 1.0, 0.0), grid, cfg)
tr = track_levels(res, (0.5,))[0]
fit = fit_linear_speed(tr)
# the front sits at 2t - (3/2) ln t, so a finite-time fit is a little slow
print(f"slow: fitted speed {fit.slope:.4f} = {fit.slope / tw.c_star:.3f} c*")

# --- fast diffusion, m = 0.5, p = 2
params = DiffusionParams(0.5, 2, 1)
d = make_plateau_tail(0.5, 2.0, params)
grid = build_grid("Composite", r_max=front_r_max(params, d.a0, T), cells=600, r_core=4.0)
cfg = SolverConfig(DoublyNonlinear(0.5, 2.0), T, snapshot_times=np.linspace(0, T, 51),
                   reaction=Full(f))
tr = track_levels(run(d, grid, cfg), (0.5,))[0]
lin, ex = fit_linear_speed(tr), fit_exp_rate(tr)
print(f"fast: linear fit R^2 = {lin.r_squared:.4f}, exponential fit R^2 = {ex.r_squared:.6f}")
print(f"      sigma_hat = {ex.slope:.4f}, sigma* = {sigma_star(params, f):.4f}")
