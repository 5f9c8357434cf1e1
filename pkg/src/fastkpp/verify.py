"""Numerical audits of comparison arguments and structural identities.

Every check returns plain data (a report object or an array) and never
mutates its inputs.  Ordering checks run on the tensor lattice of snapshot
times and cell centres, restricted to the audited region.
"""
from dataclasses import asdict, dataclass
import math

import numpy as np

from .analytic_solutions import (
    BarenblattFast, bernoulli_for_datum, heat_power_solution, lemma42_schedule,
    make_plateau_tail,
)
from .model_params import (
    FAST_GOOD, ParameterError, RegimeError, classify, logistic,
    self_similar_exponents, sigma_star, time_change,
)
from .pde_solver import (
    DoublyNonlinear, Full, Linearized, RunResult, SolverConfig, build_grid,
    front_r_max, run,
)


# ------------------------------------------------------------- regions

@dataclass(frozen=True)
class FullDomain:
    pass


@dataclass(frozen=True)
class InnerSet:
    """{r <= e^{sigma t}, t >= t0}."""
    sigma: float
    t0: float = 0.0


@dataclass
class OrderingReport:
    region: object
    worst_violation: float
    locus: tuple               # (r, t) of the worst violation, or None
    passed: bool
    tol: float
    precondition_ok: bool = True
    precondition_violation: float = 0.0
    precondition_locus: tuple = None
    samples: int = 0

    def to_dict(self):
        d = asdict(self)
        d["region"] = {"kind": type(self.region).__name__, **asdict(self.region)}
        return d


def _field(obj):
    """(callable(r, t), times, centres) for a RunResult or a callable."""
    if isinstance(obj, RunResult):
        rc = obj.grid.centers

        def ev(r, t):
            try:
                s = obj.at(t)
            except KeyError:
                raise ParameterError(f"no snapshot at t={t}") from None
            if r is rc or (len(r) == len(rc) and np.array_equal(r, rc)):
                return s.u
            return np.interp(r, rc, s.u)
        return ev, obj.times, rc
    if callable(obj):
        return (lambda r, t: np.asarray(obj(r, t), dtype=float)), None, None
    raise ParameterError("ordering sides must be callables f(r, t) or RunResults")


def _mask(region, r, t):
    if isinstance(region, FullDomain):
        return np.ones(len(r), dtype=bool)
    if isinstance(region, InnerSet):
        if t < region.t0 - 1e-12:
            return np.zeros(len(r), dtype=bool)
        return r <= math.exp(region.sigma * t)
    raise ParameterError(f"unknown region {region!r}")


def check_ordering(lower, upper, region=FullDomain(), tol=1e-6, times=None, r=None):
    """Audit lower <= upper + tol on the sample lattice.

    The initial slice and the region boundary (outermost lattice radius
    inside the region at each time) are checked first; a failure there is
    reported as a precondition failure, not as a comparison failure.
    """
    lo, t_lo, r_lo = _field(lower)
    up, t_up, r_up = _field(upper)
    if times is None:
        times = t_lo if t_lo is not None else t_up
    if r is None:
        r = r_lo if r_lo is not None else r_up
    if times is None or r is None:
        raise ParameterError("give times and r when both sides are callables")
    r = np.asarray(r, dtype=float)
    times = [float(t) for t in times]

    worst, locus, n = 0.0, None, 0
    pre_worst, pre_locus = 0.0, None
    first = True
    for t in times:
        sel = _mask(region, r, t)
        if not sel.any():
            continue
        rs = r[sel]
        gap = (lo(r, t) - up(r, t))[sel]
        n += len(rs)
        i = int(np.argmax(gap))
        if gap[i] > worst:
            worst, locus = float(gap[i]), (float(rs[i]), t)
        # initial slice, then the outer edge of the region
        edge = slice(None) if first else slice(-1, None)
        j = int(np.argmax(gap[edge]))
        g = float(gap[edge][j])
        if g > pre_worst:
            pre_worst, pre_locus = g, (float(rs[edge][j]), t)
        first = False
    pre_ok = pre_worst <= tol
    return OrderingReport(region, worst, locus, bool(pre_ok and worst <= tol), tol,
                          bool(pre_ok), pre_worst, pre_locus, n)


# ------------------------------------------------------------- w-problem

@dataclass(frozen=True)
class WProblemSetup:
    eps_tilde: float
    a0: float
    a1: float
    c0: float
    nu: float
    lam: float
    c0_raw: float
    tau1: float


def _c0_raw(f, eps_tilde, m):
    u = np.linspace(eps_tilde, 1.0, 4097)[:-1]
    ratio = np.asarray(f(u), dtype=float) / (1.0 - u)
    c = min(float(ratio.min()), -f.f_prime1)
    return c if m < 1 else c / m


def w_coefficients(params, eps_tilde, f=None, sigma=None, nu=None, lam=None):
    """Coefficient bounds for w = 1 - u^m on the inner set, normalized so
    that c0/a1 = nu*lam.

    With lam omitted the largest admissible value c0/(a1 nu) is used; a
    smaller lam shrinks c0. A larger lam would need a1 below the true
    coefficient bound and is rejected.
    """
    if not 0 < eps_tilde < 1:
        raise ParameterError("eps_tilde must lie in (0,1)")
    f = f or logistic()
    if not f.f_prime1 < 0:
        raise ParameterError("need f'(1) < 0")
    m, p = params.m, params.p
    if nu is None:
        ss = sigma_star(params, f)
        sigma = 0.5 * ss if sigma is None else sigma
        if not 0 < sigma < ss:
            raise ParameterError(f"sigma must lie in (0, {ss})")
        nu = 0.5 * (sigma + ss)
    lo, hi = (1.0 / m) * eps_tilde ** (1.0 - m), 1.0 / m
    a0, a1 = (lo, hi) if m < 1 else (hi, lo)
    c0 = c0_raw = _c0_raw(f, eps_tilde, m)
    lam_max = c0 / (a1 * nu)
    if p > 2:
        lam_max = min(lam_max, 0.5 * p / (p - 2.0))
    if lam is None:
        lam = lam_max
    if not 0 < lam <= lam_max * (1 + 1e-12):
        raise ParameterError(f"lam must lie in (0, {lam_max}]")
    c0 = min(c0, nu * lam * a1)
    alpha_l, _ = self_similar_exponents(lam, p)
    return WProblemSetup(float(eps_tilde), float(a0), float(a1), float(c0),
                         float(nu), float(lam), float(c0_raw), float(-alpha_l / c0))


def w_time(setup, p, t, t1):
    """(tau, dtau/dt) of the time change that removes the c0 term."""
    s = np.asarray(t, dtype=float) - t1
    k = setup.c0 / setup.a1
    if p < 2:
        e = np.exp(k * (2 - p) * s)
        return (e - 1.0) / (setup.c0 * (2 - p)), e / setup.a1
    if p == 2:
        return s / setup.a1, np.full_like(s, 1.0 / setup.a1)
    e = np.exp(-k * (p - 2) * s)
    return (1.0 - e) / (setup.c0 * (p - 2)), e / setup.a1


def q_function(setup, p, t, t1, tau1=None):
    """Q(t) = (c0/a1)(tau + tau1) + alpha_lam tau'; the super-solution is
    non-increasing in t wherever Q >= 0."""
    tau1 = setup.tau1 if tau1 is None else tau1
    alpha_l, _ = self_similar_exponents(setup.lam, p)
    tau, dtau = w_time(setup, p, t, t1)
    return setup.c0 / setup.a1 * (tau + tau1) + alpha_l * dtau


@dataclass(frozen=True)
class WSuper:
    """e^{-(c0/a1)(t-t1)}[1 + U(r, tau(t) + tau1)] for p = 2, where U is the
    heat flow from |x|^lam."""
    setup: WProblemSetup
    N: int
    t1: float

    def __call__(self, r, t):
        s = self.setup
        tau, _ = w_time(s, 2.0, t, self.t1)
        U = heat_power_solution(s.lam, self.N, r, float(tau) + s.tau1)
        return math.exp(-s.c0 / s.a1 * (t - self.t1)) * (1.0 + U)


# ------------------------------------------------------------- helpers

def _default_grid(params, r_max, cells, r_core):
    return build_grid("Composite", r_max=r_max, cells=cells, N=params.N, r_core=r_core)


def _l1(u, grid):
    return float(np.dot(np.abs(u), grid.volumes))


# ------------------------------------------------------------- audits

def check_selfsimilar_tracking(params, M=1.0, t0_init=1.0, horizon=1.0, cells=1024,
                               n_snap=11, grid=None, eps_reg=None):
    """Relative L1 distance between the solver and B_M(., t0_init + t).

    Returns a dict with times, errors and the boundary alarm flag.
    """
    if classify(params) != FAST_GOOD:
        raise RegimeError("tracking audit needs the FastGood regime")
    B = BarenblattFast.mass_form(params, M)
    t_end = t0_init + horizon
    if grid is None:
        scale = t_end ** (B.alpha / params.N)
        tail = (1e10 * t_end ** (1.0 / params.gamma_hat)) ** (params.gamma_hat / params.p)
        grid = _default_grid(params, max(1e4 * scale, tail), cells, 4.0 * scale)
    times = np.linspace(0.0, horizon, n_snap) if horizon > 0 else [0.0]
    cfg = SolverConfig(DoublyNonlinear(params.m, params.p), t_end=max(horizon, 0.0),
                       snapshot_times=times, eps_reg=eps_reg)
    res = run(lambda r: B(r, t0_init), grid, cfg)
    errs = []
    for s in res.snapshots:
        ex = B(grid.centers, t0_init + s.t)
        errs.append(_l1(s.u - ex, grid) / _l1(ex, grid))
    return {"times": np.array(res.times), "errors": np.array(errs),
            "boundary_alarm": res.diagnostics.boundary_alarm, "result": res}


def check_time_change_equivalence(params, f_prime0, datum, horizon, cells=1024,
                                  grid=None, n_snap=5, eps_reg=None):
    """Max relative gap between the linearized run u(t) and e^{f'(0) t}v(tau(t))
    from the pure diffusion run, over snapshot times in (0, horizon]."""
    gh = params.gamma_hat
    if f_prime0 < 0:
        raise ParameterError("f'(0) must be non-negative")
    if not horizon > 0:
        raise ParameterError("horizon must be positive")
    ts = np.linspace(0.0, horizon, n_snap + 1)[1:]
    taus = ts if f_prime0 == 0 else time_change(ts, f_prime0, gh)
    if grid is None:
        grid = _default_grid(params, 1e4, cells, 4.0)
    op = DoublyNonlinear(params.m, params.p)
    u = run(datum, grid, SolverConfig(op, t_end=ts[-1], snapshot_times=ts,
                                      reaction=Linearized(f_prime0), eps_reg=eps_reg))
    v = run(datum, grid, SolverConfig(op, t_end=float(taus[-1]), snapshot_times=taus,
                                      eps_reg=eps_reg))
    gap = 0.0
    for su, sv in zip(u.snapshots, v.snapshots):
        lifted = math.exp(f_prime0 * su.t) * sv.u
        gap = max(gap, float(np.max(np.abs(su.u - lifted)) / np.max(np.abs(su.u))))
    return gap


def check_radial_monotonicity(result):
    """Largest forward difference u_{i+1} - u_i over all snapshots (0 if none)."""
    worst = 0.0
    for s in result.snapshots:
        worst = max(worst, float(np.max(np.diff(s.u), initial=0.0)))
    return worst


def check_lemma42_iteration(params, f=None, sigma=None, j_max=3, cells=2000,
                            eps_reg=None, schedule=None):
    """Margins min_{r <= rho0 e^{sigma j t0}} (u(r, j t0) - eps_tilde), j = 0..j_max.

    Returns (schedule, list of (j, margin, r at the minimum)).
    """
    f = f or logistic()
    sch = schedule or lemma42_schedule(params, f, sigma)
    d = make_plateau_tail(sch.eps_tilde, sch.rho_tilde0, params)
    T = j_max * sch.t0
    r_need = sch.rho_tilde0 * math.exp(sch.sigma * T)
    r_max = max(front_r_max(params, d.a0, T, f.f_prime0), 4.0 * r_need)
    grid = _default_grid(params, r_max, cells, sch.rho_tilde0)
    ts = [j * sch.t0 for j in range(j_max + 1)]
    cfg = SolverConfig(DoublyNonlinear(params.m, params.p), t_end=T, snapshot_times=ts,
                       reaction=Full(f), eps_reg=eps_reg)
    res = run(d, grid, cfg)
    rc = grid.centers
    out = []
    for j, s in enumerate(res.snapshots):
        sel = rc <= sch.rho_tilde0 * math.exp(sch.sigma * j * sch.t0)
        gap = s.u[sel] - sch.eps_tilde
        i = int(np.argmin(gap))
        out.append((j, float(gap[i]), float(rc[sel][i])))
    return sch, out


# ------------------------------------------------------------- composite audits

def audit_bernoulli(params, datum, t_end, f=None, cells=1024, n_snap=21, tol=1e-6,
                    eps_reg=None, r_core=None):
    """Full reaction run below the Bernoulli barrier built from the datum's
    tail amplitude a0; FullDomain ordering."""
    f = f or logistic()
    S = bernoulli_for_datum(params, datum.a0, f.f_prime0)
    r_max = front_r_max(params, datum.a0, t_end, f.f_prime0)
    grid = _default_grid(params, r_max, cells, r_core or 2.0 * datum.rho_tilde0)
    cfg = SolverConfig(DoublyNonlinear(params.m, params.p), t_end=t_end,
                       snapshot_times=np.linspace(0.0, t_end, n_snap),
                       reaction=Full(f), eps_reg=eps_reg)
    res = run(datum, grid, cfg)
    return check_ordering(res, S, FullDomain(), tol), res


def audit_barenblatt_linearized(params, sigma, f=None, cells=1024, n_snap=21,
                                tol=1e-6, eps_reg=None):
    """B_{M1}(., theta1 + tau(t)) below e^{-lam t}u(., t), u the linearized
    run from the schedule's plateau-tail datum, for t in [0, t0]."""
    f = f or logistic()
    sch = lemma42_schedule(params, f, sigma)
    d = make_plateau_tail(sch.eps_tilde, sch.rho_tilde0, params)
    B = BarenblattFast.mass_form(params, sch.M1)
    gh = params.gamma_hat
    T = sch.t0
    r_max = front_r_max(params, d.a0, T, sch.lam)
    grid = _default_grid(params, r_max, cells, 2.0 * sch.rho_tilde0)
    cfg = SolverConfig(DoublyNonlinear(params.m, params.p), t_end=T,
                       snapshot_times=np.linspace(0.0, T, n_snap),
                       reaction=Linearized(sch.lam), eps_reg=eps_reg)
    res = run(d, grid, cfg)
    ev, _, _ = _field(res)

    def lower(r, t):
        return B(r, sch.theta1 + float(time_change(t, sch.lam, gh)))

    def upper(r, t):
        return math.exp(-sch.lam * t) * ev(r, t)

    rep = check_ordering(lower, upper, FullDomain(), tol, times=res.times,
                         r=grid.centers)
    return rep, sch, res


def audit_w_problem(params, result, sigma, t1, f=None, tol=1e-6):
    """w = 1 - u^m from a full run below the explicit super-solution on the
    inner set {r <= e^{nu t}, t >= t1}.  Needs p = 2."""
    if params.p != 2:
        raise ParameterError("the explicit w super-solution is available for p = 2")
    f = f or logistic()
    ss = sigma_star(params, f)
    nu = 0.5 * (sigma + ss)
    region = InnerSet(nu, t1)
    rc = result.grid.centers
    eps = 1.0
    for s in result.snapshots:
        sel = _mask(region, rc, s.t)
        if sel.any():
            eps = min(eps, float(s.u[sel].min()))
    if not 0 < eps < 1:
        raise ParameterError(f"inner-set lower bound {eps} is not in (0,1)")
    setup = w_coefficients(params, eps * (1 - 1e-9), f, nu=nu)
    ev, _, _ = _field(result)
    m = params.m

    def lower(r, t):
        return 1.0 - ev(r, t) ** m

    upper = WSuper(setup, params.N, t1)
    rep = check_ordering(lower, upper, region, tol, times=result.times, r=rc)
    return rep, setup
