"""Parameter algebra for u_t = Delta_p(u^m) + f(u).

Everything here is a pure function of a validated DiffusionParams triple
(m, p, N) and, where needed, a reaction term.
"""
from dataclasses import dataclass, field
from typing import Callable
import math

import numpy as np

SLOW = "SlowOrPseudoLinear"
FAST_GOOD = "FastGood"
CRITICAL = "Critical"
VERY_FAST = "VeryFast"
REGIMES = (SLOW, FAST_GOOD, CRITICAL, VERY_FAST)

CRITICAL_RTOL = 1e-12


class ParameterError(ValueError):
    """A parameter lies outside its admissible domain."""


class RegimeError(ValueError):
    """An operation was asked for in a regime where it is not defined."""


@dataclass(frozen=True)
class DiffusionParams:
    m: float
    p: float
    N: int

    def __post_init__(self):
        m, p, N = self.m, self.p, self.N
        if not (isinstance(m, (int, float)) and math.isfinite(m) and m > 0):
            raise ParameterError(f"m must be a positive finite real, got {m!r}")
        if not (isinstance(p, (int, float)) and math.isfinite(p) and p > 1):
            raise ParameterError(f"p must be a finite real > 1, got {p!r}")
        if isinstance(N, bool) or int(N) != N or N < 1:
            raise ParameterError(f"N must be a positive integer, got {N!r}")
        object.__setattr__(self, "m", float(m))
        object.__setattr__(self, "p", float(p))
        object.__setattr__(self, "N", int(N))

    @property
    def gamma(self):
        return self.m * (self.p - 1.0) - 1.0

    @property
    def gamma_hat(self):
        return 1.0 - self.m * (self.p - 1.0)

    @property
    def regime(self):
        return classify(self)


def classify(params, rtol=CRITICAL_RTOL):
    """Regime tag of a parameter triple.

    The critical line gamma_hat = p/N is matched with a relative tolerance
    because config files carry decimals, not rationals.
    """
    gh = params.gamma_hat
    pn = params.p / params.N
    if gh <= 0.0:
        return SLOW
    if abs(gh - pn) <= rtol * pn:
        return CRITICAL
    if gh < pn:
        return FAST_GOOD
    return VERY_FAST


def derive_exponents(params, rtol=CRITICAL_RTOL):
    """Return (gamma, gamma_hat, regime)."""
    if not isinstance(params, DiffusionParams):
        params = DiffusionParams(*params)
    return params.gamma, params.gamma_hat, classify(params, rtol)


def _require(params, *allowed):
    reg = classify(params)
    if reg not in allowed:
        raise RegimeError(f"{params} is in regime {reg}; need one of {allowed}")
    return reg


# ---------------------------------------------------------------- reactions

@dataclass(frozen=True)
class ReactionSpec:
    kind: str
    f_prime0: float
    evaluator: Callable = field(compare=False)
    f_prime1: float = -1.0

    def __call__(self, u):
        return self.evaluator(u)


def _logistic(u):
    return u * (1.0 - u)


def logistic():
    return ReactionSpec("Logistic", 1.0, _logistic, -1.0)


def validate_reaction(spec, n=4097):
    """Numerical KPP checks on a uniform grid of [0, 1].

    Raises ParameterError naming the first failed property.
    """
    u = np.linspace(0.0, 1.0, n)
    fu = np.asarray(spec.evaluator(u), dtype=float)
    if abs(fu[0]) > 1e-12 or abs(fu[-1]) > 1e-12:
        raise ParameterError("reaction must vanish at u=0 and u=1")
    if np.any(fu[1:-1] <= 0.0):
        raise ParameterError("reaction must be positive on (0,1)")
    if np.max(np.diff(fu, 2)) > 1e-9:
        raise ParameterError("reaction is not concave on [0,1]")
    if not spec.f_prime0 > 0:
        raise ParameterError("f'(0) must be positive")
    return spec


def custom_reaction(f, f_prime0, f_prime1=None):
    spec = ReactionSpec("Custom", float(f_prime0), f,
                        -1.0 if f_prime1 is None else float(f_prime1))
    return validate_reaction(spec)


# ---------------------------------------------------------------- constants

def sigma_star(params, f=None):
    fp0 = 1.0 if f is None else f.f_prime0
    reg = _require(params, FAST_GOOD, CRITICAL)
    if reg == CRITICAL:
        return fp0 / params.N
    return params.gamma_hat / params.p * fp0


def barenblatt_constants(params):
    """(alpha, k) exactly as they appear in the closed-form profile.

    Note that k is the constant of the equation with the factor m^(p-1)
    absorbed into time; the evaluators in analytic_solutions divide it by m
    so that they solve u_t = Delta_p(u^m) itself.
    """
    _require(params, FAST_GOOD)
    m, p, N, gh = params.m, params.p, params.N, params.gamma_hat
    alpha = 1.0 / (p / N - gh)
    k = gh / p * (alpha / N) ** (1.0 / (p - 1.0))
    return alpha, k


def kappa(params):
    _require(params, FAST_GOOD)
    m, p, N, gh = params.m, params.p, params.N, params.gamma_hat
    return (p - gh * N) * (m * p) ** (p - 1.0) / gh ** p


def d_constants(params):
    """Barrier constants, with p/g^2(p - gN) read as p(p - gN)/g^2."""
    _require(params, FAST_GOOD)
    m, p, N, gh = params.m, params.p, params.N, params.gamma_hat
    d1 = p * (p - gh * N) / gh ** 2
    d2 = p * ((p - 1.0) * (p - gh) + gh * (N - 1.0)) / gh ** 2
    d3 = (p / gh) ** (2.0 - p) * m ** (1.0 - p)
    return d1, d2, d3


def self_similar_exponents(lam, p):
    """(alpha_lambda, beta_lambda) for the p-Laplacian with datum |x|^lam."""
    if not (lam > 0 and math.isfinite(lam)):
        raise ParameterError(f"lambda must be positive, got {lam!r}")
    if not p > 1:
        raise ParameterError(f"p must be > 1, got {p!r}")
    if p > 2 and lam >= p / (p - 2.0):
        raise ParameterError(f"lambda={lam} must be < p/(p-2)={p / (p - 2.0)}")
    den = (1.0 - lam) * p + 2.0 * lam
    return -lam / den, 1.0 / den


def tau_infinity(rate, gamma_hat):
    return 1.0 / (rate * gamma_hat)


def time_change(t, rate, gamma_hat):
    """tau(t) = (1 - exp(-rate*gh*t)) / (rate*gh); works on arrays."""
    c = rate * gamma_hat
    if c <= 0:
        raise ParameterError("rate*gamma_hat must be positive")
    return -np.expm1(-c * np.asarray(t, dtype=float)) / c


def inverse_time_change(tau, rate, gamma_hat):
    c = rate * gamma_hat
    if c <= 0:
        raise ParameterError("rate*gamma_hat must be positive")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0) or np.any(tau * c >= 1.0):
        raise ParameterError(f"tau must lie in [0, {1.0 / c})")
    return -np.log1p(-c * tau) / c


@dataclass(frozen=True)
class ExponentBundle:
    gamma: float
    gamma_hat: float
    sigma_star: float
    alpha: float
    k: float
    kappa: float
    d1: float
    d2: float
    d3: float
    tau_infinity: float


def exponent_bundle(params, f=None):
    fp0 = 1.0 if f is None else f.f_prime0
    alpha, k = barenblatt_constants(params)
    d1, d2, d3 = d_constants(params)
    return ExponentBundle(params.gamma, params.gamma_hat, sigma_star(params, f),
                          alpha, k, kappa(params), d1, d2, d3,
                          tau_infinity(fp0, params.gamma_hat))
