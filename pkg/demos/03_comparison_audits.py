"""Sub- and super-solutions as numerical audits.

The exponential rate is squeezed between explicit barriers: a separable
Bernoulli super-solution |x|^{-p/gamma_hat} G(t) from above, and a
rescaled Barenblatt solution of the linearized problem from below.  Each
audit runs the solver and reports the worst ordering violation.
"""
from fastkpp import (
    DiffusionParams, audit_barenblatt_linearized, audit_bernoulli,
    barrier_feasibility, check_lemma42_iteration, lemma42_schedule, logistic,
    make_plateau_tail, sigma_star,
)

params = DiffusionParams(0.5, 2, 1)
f = logistic()
ss = sigma_star(params, f)

rep, res = audit_bernoulli(params, make_plateau_tail(0.5, 2.0, params), 8.0, f)
print(f"solver below Bernoulli barrier: passed {rep.passed}, "
      f"worst violation {rep.worst_violation:.2e} over {rep.samples} samples")

rep, sch, _ = audit_barenblatt_linearized(params, 0.5 * ss, f)
print(f"Barenblatt below linearized run: passed {rep.passed} on t in [0, {sch.t0:.2f}]")

# The constants of the expansion step for sigma = sigma*/2.  t0 is the
# time after which the super-level set {u >= eps} has grown by e^{sigma t0}.
print(f"schedule: delta = {sch.delta}, lam = {sch.lam}, t0 = {sch.t0:.3f}, "
      f"eps = {sch.eps_tilde:.3g}, rho0 = {sch.rho_tilde0:.3g}")
_, margins = check_lemma42_iteration(params, f, 0.5 * ss)
for j, mg, r in margins:
    print(f"  j = {j}: min u - eps on the expanded ball = {mg:.3g}")

# Closer to sigma* the schedule needs much smaller plateaus and much larger balls.
close = lemma42_schedule(params, f, 0.9 * ss)
print(f"at 0.9 sigma*: t0 = {close.t0:.1f}, eps = {close.eps_tilde:.2e}, "
      f"rho0 = {close.rho_tilde0:.2e}")

# The radial barrier that pushes the plateau outwards needs r0 large enough
# for its sign function to stay non-negative.
fr = barrier_feasibility(params, 0.1)
print(f"barrier: branch {fr.branch}, r0 = {fr.r0:.4f}, certificate {fr.certificate}, "
      f"min value {fr.worst_value:.3g}")
