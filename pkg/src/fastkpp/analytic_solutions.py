"""Closed-form solutions, barriers and constant schedules.

All profiles here solve the unabsorbed equation u_t = Delta_p(u^m) (+ f),
which is why the profile coefficient is k/m rather than k: the textbook
constants belong to the time-rescaled equation u_t = m^(1-p) Delta_p(u^m).
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import optimize, special

from .model_params import (
    FAST_GOOD, CRITICAL, VERY_FAST, ParameterError, RegimeError,
    barenblatt_constants, classify, d_constants, kappa, logistic,
    self_similar_exponents, sigma_star, time_change,
)


class FeasibilityError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class ScheduleError(RuntimeError):
    pass


def surface_area(N):
    """|S^{N-1}|; equals 2 for N=1 (full-line convention)."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def profile_coefficient(params):
    """(alpha, k_eff) with k_eff = k/m, the coefficient of |xi|^{p/(p-1)}."""
    alpha, k = barenblatt_constants(params)
    return alpha, k / params.m


def _exps(params):
    p, gh = params.p, params.gamma_hat
    return p / (p - 1.0), (p - 1.0) / gh   # s, q


def profile(params, xi, C):
    """F(xi) = (C + k_eff |xi|^{p/(p-1)})^{-(p-1)/gh}."""
    _, ke = profile_coefficient(params)
    s, q = _exps(params)
    return (C + ke * np.abs(xi) ** s) ** (-q)


def profile_mass(params, C):
    """Integral of F over R^N, via the Beta function."""
    _, ke = profile_coefficient(params)
    s, q = _exps(params)
    N = params.N
    a = N / s
    return (surface_area(N) / s * ke ** (-a) * C ** (a - q)
            * special.beta(a, q - a))


def normalize_mass(params, M):
    """Profile constant C_M such that the solution carries mass M."""
    if classify(params) != FAST_GOOD:
        raise RegimeError("mass normalization needs the FastGood regime")
    if not M > 0:
        raise ParameterError(f"mass must be positive, got {M!r}")
    s, q = _exps(params)
    a = params.N / s
    m1 = profile_mass(params, 1.0)
    return (M / m1) ** (1.0 / (a - q))


@dataclass(frozen=True)
class BarenblattFast:
    params: object
    C: float
    M: float
    D: float = None

    @classmethod
    def mass_form(cls, params, M=1.0):
        return cls(params, normalize_mass(params, M), float(M))

    @classmethod
    def d_form(cls, params, D):
        alpha, _ = profile_coefficient(params)
        C = (params.N / alpha) ** (alpha * params.gamma_hat / (params.p - 1.0)) * D
        return cls(params, C, profile_mass(params, C), float(D))

    @property
    def alpha(self):
        return profile_coefficient(self.params)[0]

    def __call__(self, x, t):
        return eval_barenblatt(self, x, t)


def eval_barenblatt(B, x, t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("Barenblatt evaluation needs t > 0")
    alpha = B.alpha
    xi = np.abs(x) * t ** (-alpha / B.params.N)
    return t ** (-alpha) * profile(B.params, xi, B.C)


def eval_barenblatt_dform(B, x, t):
    """Same solution written with R(t) = ((N/alpha) t)^{alpha/N}."""
    if B.D is None:
        raise ParameterError("not a D-form Barenblatt")
    p, N, gh, m = B.params.p, B.params.N, B.params.gamma_hat, B.params.m
    alpha = B.alpha
    R = (N / alpha * np.asarray(t, dtype=float)) ** (alpha / N)
    z = np.abs(x) / R
    return R ** (-N) * (B.D + gh / (p * m) * z ** (p / (p - 1.0))) ** (-(p - 1.0) / gh)


@dataclass(frozen=True)
class ProfileBounds:
    K1: float
    K2: float
    xi_min: float


def profile_bounds(B):
    """K1 = sup xi^{p/gh} F and K2 = inf F (1 + xi^{p/gh})."""
    params = B.params
    _, ke = profile_coefficient(params)
    s, q = _exps(params)
    K1 = ke ** (-q)
    e = params.p / params.gamma_hat

    def g(eta):
        # log form: xi^e overflows for small gh
        logF = -q * np.log(B.C + ke * np.exp(s * eta))
        return np.exp(logF + np.logaddexp(0.0, e * eta))

    eta = np.linspace(-40.0, 40.0, 8001)
    vals = g(eta)
    i = int(np.argmin(vals))
    K2, xi_min = vals[i], math.exp(eta[i])
    if 0 < i < len(eta) - 1:
        res = optimize.minimize_scalar(g, bounds=(eta[i - 1], eta[i + 1]),
                                       method="bounded",
                                       options={"xatol": 1e-12})
        if res.fun < K2:
            K2, xi_min = float(res.fun), math.exp(res.x)
    # xi = 0 itself
    f0 = B.C ** (-q)
    if f0 < K2:
        K2, xi_min = f0, 0.0
    return ProfileBounds(float(K1), float(K2), xi_min)


# ------------------------------------------------------------- super/sub

@dataclass(frozen=True)
class BernoulliSuper:
    """|x|^{-p/gh} G(t) with G^gh = a e^{gh*rate*t} - kappa/rate."""
    params: object
    a: float
    rate: float = 1.0

    def G(self, t):
        gh = self.params.gamma_hat
        base = self.a * np.exp(gh * self.rate * np.asarray(t, dtype=float)) \
            - kappa(self.params) / self.rate
        return np.maximum(base, 0.0) ** (1.0 / gh)

    def __call__(self, x, t):
        return eval_bernoulli_super(self, x, t)

    def level_radius(self, omega, t):
        return (self.G(t) / omega) ** (self.params.gamma_hat / self.params.p)


def eval_bernoulli_super(S, x, t):
    x = np.abs(np.asarray(x, dtype=float))
    if np.any(x == 0):
        raise ParameterError("Bernoulli super-solution has a pole at x=0")
    if S.a < kappa(S.params) / S.rate:
        raise ParameterError("need a >= kappa/rate")
    return x ** (-S.params.p / S.params.gamma_hat) * S.G(t)


def bernoulli_for_datum(params, C, rate=1.0):
    """Smallest Bernoulli barrier above min(1, C|x|^{-p/gh}) at t=0."""
    return BernoulliSuper(params, kappa(params) / rate + C ** params.gamma_hat, rate)


@dataclass(frozen=True)
class KMSimilarity:
    params: object
    a_hat: float

    def __call__(self, r, t):
        return eval_km_profile(self, r, t)

    def level_radius(self, omega, t):
        e = self.params.gamma_hat / self.params.p
        return (self.a_hat * np.exp(t) * (1.0 - omega) / omega) ** e


def eval_km_profile(K, r, t):
    psi = np.abs(np.asarray(r, dtype=float)) ** (K.params.p / K.params.gamma_hat)
    # divide through by a_hat e^t to stay finite for large t
    return 1.0 / (psi * np.exp(-np.asarray(t, dtype=float)) / K.a_hat + 1.0)


@dataclass(frozen=True)
class BarrierSub:
    params: object
    b: float
    c: float
    r0: float
    t0: float = 0.0

    def __call__(self, r, t):
        return eval_barrier_sub(self, r, t)


def eval_barrier_sub(B, r, t):
    psi = np.abs(np.asarray(r, dtype=float)) ** (B.params.p / B.params.gamma_hat)
    return 1.0 / (B.b * psi * np.exp(-np.asarray(t, dtype=float)) + B.c)


def barrier_sign_function(params, c, r0, xi, b=1.0):
    """C_{r0}(xi); the barrier is a sub-solution where this is >= 0."""
    d1, d2, d3 = d_constants(params)
    p, gh = params.p, params.gamma_hat
    xi = np.asarray(xi, dtype=float)
    lead = d3 * (c - 1.0) * b ** (1.0 - p) * r0 ** p \
        * xi ** (1.0 + gh) * (b + c * xi) ** (p - 1.0 - gh)
    return lead - d2 * c * xi + b * d1


def barrier_r0_bounds(params, eps):
    """Lower bounds on r0^p, keyed by origin.

    'first' guards the branch gh <= p-1. For gh > p-1 three versions are
    kept: the displayed one, the one reached at the end of its proof, and
    the one obtained by carrying the proof's compatibility step through
    exactly. That branch uses the largest of the three.
    """
    d1, d2, d3 = d_constants(params)
    p, gh = params.p, params.gamma_hat
    e = gh - (p - 1.0)
    out = {
        "first": d2 ** (gh + 1) * (1 - eps) ** (-gh) / (d1 ** gh * d3 * (gh + 1)) / eps,
        "second_displayed": d2 ** 2 * (d1 + d1 / d2) ** e / (p * d1 * d3) * eps ** (-1 / gh),
        "second_proof": d2 ** 2 * (1 + d1 / d2) ** e / (p * d1 * d3) * eps ** (-1 / gh)
        * (1 - eps) ** ((1 + 2 * gh) / (gh * (1 + gh))),
        "second_exact": d2 ** (1 + gh) * (1 + d1 / d2) ** e * (1 - eps) ** (-gh)
        / (p * d3 * d1 ** gh * eps),
    }
    return out


@dataclass
class FeasibilityReport:
    ok: bool
    branch: str
    eps: float
    c: float
    r0: float
    r0_min: float
    r0p_bounds: dict
    xi0: float
    small_xi_condition: bool
    certificate: bool
    worst_xi: float
    worst_value: float
    asymptotics_ok: bool
    conditions: dict = field(default_factory=dict)


def barrier_feasibility(params, eps, r0_candidate=None, n_grid=100_000,
                        b=1.0, raise_on_fail=True):
    """Choose r0 for the barrier and certify C_{r0} >= 0 on a log grid."""
    if classify(params) != FAST_GOOD:
        raise RegimeError("barrier needs the FastGood regime")
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0,1)")
    p, gh = params.p, params.gamma_hat
    d1, d2, d3 = d_constants(params)
    c = 1.0 / (1.0 - eps)
    bounds = barrier_r0_bounds(params, eps)
    if gh <= p - 1.0:
        r0_min = bounds["first"] ** (1.0 / p)
    else:
        r0_min = max(bounds["second_displayed"], bounds["second_proof"],
                     bounds["second_exact"]) ** (1.0 / p)
    r0 = r0_min if r0_candidate is None else float(r0_candidate)

    if gh <= p - 1.0:
        branch = "gh<=p-1"
        xi0g = d2 * c * b ** gh / (d3 * (1 + gh) * r0 ** p * (c - 1))
    else:
        branch = "gh>p-1"
        xi0g = d2 * (1 + d1 / d2) ** (gh - (p - 1)) * c * b ** gh \
            / (p * d3 * r0 ** p * (c - 1))
    xi0 = xi0g ** (1.0 / gh)
    small_ok = c <= d1 / d2 * b / xi0 * (1 + 1e-12)

    xi = np.logspace(-8, 8, n_grid)
    vals = barrier_sign_function(params, c, r0, xi, b)
    j = int(np.argmin(vals))
    cert = bool(vals[j] >= 0)
    # leading orders: b*d1 > 0 at 0, and the xi^p term wins at infinity
    asym = d1 > 0 and d3 * (c - 1) * r0 ** p * c ** (p - 1 - gh) > 0 and p > 1
    ok = cert and asym
    rep = FeasibilityReport(ok, branch, eps, c, r0, r0_min, bounds, xi0,
                            bool(small_ok), cert, float(xi[j]), float(vals[j]),
                            asym, {"d1": d1, "d2": d2, "d3": d3})
    if not ok and raise_on_fail:
        raise FeasibilityError(
            f"C_r0 < 0 at xi={xi[j]:.6g} (value {vals[j]:.6g}), r0={r0:.6g}", rep)
    return rep


# ------------------------------------------------------------- data

@dataclass(frozen=True)
class PlateauTailDatum:
    params: object
    eps_tilde: float
    rho_tilde0: float

    @property
    def a0(self):
        return self.eps_tilde * self.rho_tilde0 ** (self.params.p / self.params.gamma_hat)

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        e = self.params.p / self.params.gamma_hat
        with np.errstate(divide="ignore"):
            tail = self.a0 * np.where(r > 0, r, 1.0) ** (-e)
        return np.where(r <= self.rho_tilde0, self.eps_tilde, tail)


def make_plateau_tail(eps_tilde, rho_tilde0, params):
    if not 0 < eps_tilde < 1:
        raise ParameterError("eps_tilde must lie in (0,1)")
    if not rho_tilde0 > 0:
        raise ParameterError("rho_tilde0 must be positive")
    if not params.gamma_hat > 0:
        raise ParameterError("plateau-tail data need gamma_hat > 0")
    return PlateauTailDatum(params, float(eps_tilde), float(rho_tilde0))


# ------------------------------------------------------------- schedule

@dataclass(frozen=True)
class Lemma42Schedule:
    sigma: float
    delta: float
    lam: float
    t0: float
    eps_tilde0: float
    eps_tilde: float
    rho_tilde0_min: float
    rho_tilde0: float
    M1: float
    theta1: float
    Kbar: float
    Ktilde: float
    K1: float
    K2: float
    C1: float
    tau0: float
    rho_tilde1: float


def lemma42_schedule(params, f=None, sigma=None, eps_tilde=None,
                     rho_tilde0=None, max_halvings=60):
    """Constants for the expanding-plateau iteration at rate sigma."""
    if classify(params) != FAST_GOOD:
        raise RegimeError("schedule is only available in the FastGood regime")
    f = f or logistic()
    ss = sigma_star(params, f)
    if sigma is None or not 0 < sigma < ss:
        raise ParameterError(f"sigma must lie in (0, {ss})")
    p, N, gh = params.p, params.N, params.gamma_hat
    delta = 0.5
    for _ in range(max_halvings):
        lam = float(f(delta)) / delta
        if gh / p * lam > sigma:
            break
        delta *= 0.5
    else:
        raise ScheduleError("no admissible delta; sigma too close to sigma*")

    B1 = BarenblattFast.mass_form(params, 1.0)
    pb = profile_bounds(B1)
    K1, K2, C1 = pb.K1, pb.K2, B1.C
    alpha = B1.alpha
    q = (p - 1.0) / gh
    Kbar = (C1 ** q * K1 ** (-alpha * gh)) ** (N / (alpha * p))
    Ktilde = K2 / 2.0 * C1 ** q
    t_a = math.log(2.0 ** alpha / Ktilde) / lam
    t_b = math.log(2.0 * K1 / K2) / (lam - p / gh * sigma)
    t0 = max(0.0, t_a, t_b)
    eps0 = delta * math.exp(-lam * t0)
    if eps0 == 0.0:
        raise ScheduleError(f"t0 = {t0:.6g} is so large that eps_tilde0 underflows; "
                            "sigma sits too close to the end of its delta branch")
    eps = eps0 if eps_tilde is None else float(eps_tilde)
    if not 0 < eps <= eps0 * (1 + 1e-12):
        raise ScheduleError(f"eps_tilde must lie in (0, {eps0}]")
    rho_min = (K1 ** gh / (lam * gh * eps ** gh)) ** (1.0 / p)
    rho0 = rho_min if rho_tilde0 is None else float(rho_tilde0)
    if rho0 < rho_min * (1 - 1e-12):
        raise ScheduleError(f"rho_tilde0 must be >= {rho_min}")
    M1 = Kbar * rho0 ** N * eps
    theta1 = K1 ** (-gh) * rho0 ** p * eps ** gh
    tau0 = float(time_change(t0, lam, gh))
    rho1 = (K2 / 2.0 * math.exp(lam * t0) * (theta1 + tau0) ** (1 / gh) / eps) ** (gh / p)
    return Lemma42Schedule(sigma, delta, lam, t0, eps0, eps, rho_min, rho0,
                           M1, theta1, Kbar, Ktilde, K1, K2, C1, tau0, rho1)


# ------------------------------------------------------------- critical & beyond

@dataclass(frozen=True)
class PseudoBarenblattCritical:
    params: object
    D: float

    def __post_init__(self):
        if classify(self.params) != CRITICAL:
            raise RegimeError("pseudo-Barenblatt needs the Critical regime")

    def __call__(self, x, t):
        return eval_pseudo_barenblatt(self, x, t)


def eval_pseudo_barenblatt(P, x, t):
    p, N, m = P.params.p, P.params.N, P.params.m
    R = np.exp(np.asarray(t, dtype=float))
    z = np.abs(np.asarray(x, dtype=float)) / R
    return R ** (-N) * (P.D + z ** (p / (p - 1.0)) / (N * m)) ** (-(p - 1.0) * N / p)


@dataclass(frozen=True)
class TypeIIVeryFast:
    params: object
    D: float
    tc: float

    def __post_init__(self):
        if classify(self.params) != VERY_FAST:
            raise RegimeError("Type II solutions need the VeryFast regime")
        if self.D < 0 or self.tc <= 0:
            raise ParameterError("need D >= 0 and tc > 0")

    def __call__(self, x, t):
        return eval_typeII(self, x, t)


def eval_typeII(T, x, t):
    p, N, m, gh = T.params.p, T.params.N, T.params.m, T.params.gamma_hat
    t = np.asarray(t, dtype=float)
    if np.any(t >= T.tc):
        raise ParameterError("Type II solution is extinct for t >= tc")
    aa = abs(1.0 / (p / N - gh))
    R = (N / aa * (T.tc - t)) ** (-aa / N)
    z = np.abs(np.asarray(x, dtype=float)) / R
    return R ** (-N) * (T.D + gh / (p * m) * z ** (p / (p - 1.0))) ** (-(p - 1.0) / gh)


def eval_critical_tail(params, t, r):
    if classify(params) != CRITICAL:
        raise RegimeError("critical tail needs the Critical regime")
    p, N, m = params.p, params.N, params.m
    if not N > p:
        raise ParameterError("critical tail needs N > p")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 1):
        raise ParameterError("critical tail needs r > 1")
    apn = m ** (p - 1.0) * (N - p) * N ** (p - 2.0)
    return (apn * t / (r ** p * np.log(r))) ** (N / p)


# ------------------------------------------------------------- heat with power datum

def heat_power_solution(lam, N, r, t):
    """Solution of U_t = Delta U in R^N with U(x,0) = |x|^lam.

    E|x + sqrt(2t) Z|^lam written with Kummer's function.
    """
    r = np.abs(np.asarray(r, dtype=float))
    t = float(t)
    if t == 0:
        return r ** lam
    z = r ** 2 / (4.0 * t)
    pref = (4.0 * t) ** (lam / 2.0) * math.exp(
        math.lgamma((N + lam) / 2.0) - math.lgamma(N / 2.0))
    return pref * special.hyp1f1(-lam / 2.0, N / 2.0, -z)


