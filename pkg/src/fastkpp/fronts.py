"""Level-set extraction, propagation fits and travelling-wave speeds."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate, stats

from .model_params import ParameterError, logistic


class InsufficientSamples(ValueError):
    pass


class InconclusiveShot(RuntimeError):
    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


# ------------------------------------------------------------- level sets

def level_radius(u, r, omega):
    """Outermost radius where u crosses omega, or None if there is none.

    Between the bracketing centres ln u is interpolated linearly; when one
    side is zero a plain linear interpolation is used instead.
    """
    if not 0 < omega < 1:
        raise ParameterError("omega must lie in (0,1)")
    u = np.asarray(u, dtype=float)
    above = np.nonzero(u >= omega)[0]
    if len(above) == 0:
        return None
    i = above[-1]
    if i == len(u) - 1:
        return None
    u0, u1 = u[i], u[i + 1]
    r0, r1 = r[i], r[i + 1]
    if u1 > 0:
        w = math.log(u0 / omega) / math.log(u0 / u1)
    else:
        w = (u0 - omega) / (u0 - u1)
    return float(r0 + (r1 - r0) * w)


@dataclass
class LevelSetTrajectory:
    omega: float
    t: np.ndarray
    r: np.ndarray           # nan marks a missing crossing
    extraction: str = "Outermost"

    @property
    def valid(self):
        return np.isfinite(self.r) & (self.r > 0)


def track_levels(result, omegas, grid=None):
    grid = grid or result.grid
    rc = grid.centers
    t = np.array([s.t for s in result.snapshots])
    out = []
    for om in omegas:
        rs = [level_radius(s.u, rc, om) for s in result.snapshots]
        out.append(LevelSetTrajectory(float(om), t,
                                      np.array([np.nan if x is None else x for x in rs])))
    return out


# ------------------------------------------------------------- fits

@dataclass
class RateFit:
    slope: float
    intercept: float
    window: tuple
    r_squared: float
    ci_half_width: float
    n: int


def _window(traj, window):
    if window is None:
        ok = traj.valid
        if not ok.any():
            raise InsufficientSamples("no valid samples")
        t_end = traj.t[ok].max()
        window = (0.5 * t_end, t_end)
    lo, hi = window
    sel = traj.valid & (traj.t >= lo - 1e-12) & (traj.t <= hi + 1e-12)
    if sel.sum() < 5:
        raise InsufficientSamples(f"{sel.sum()} samples in window {window}, need 5")
    return (float(lo), float(hi)), sel


def _fit(x, y, window):
    n = len(x)
    if np.ptp(y) == 0:
        return RateFit(0.0, float(y[0]), window, 1.0, 0.0, n)
    res = stats.linregress(x, y)
    tq = stats.t.ppf(0.975, n - 2)
    r2 = min(1.0, max(0.0, res.rvalue ** 2))
    return RateFit(float(res.slope), float(res.intercept), window, r2,
                   float(tq * res.stderr), n)


def fit_exp_rate(traj, window=None):
    """Least-squares slope of ln r_omega against t."""
    window, sel = _window(traj, window)
    return _fit(traj.t[sel], np.log(traj.r[sel]), window)


def fit_linear_speed(traj, window=None):
    window, sel = _window(traj, window)
    return _fit(traj.t[sel], traj.r[sel], window)


def band_check(traj, sigma_star, window=None, log_tol=0.0):
    """(Cband, ok): the largest deviation of r e^{-sigma* t} from 1 in log
    scale, and whether it does not grow from the first half of the window
    to the second by more than log_tol (in ln r; one grid cell is the
    natural resolution)."""
    window, sel = _window(traj, window)
    t, r = traj.t[sel], traj.r[sel]
    z = np.abs(np.log(r) - sigma_star * t)
    c = np.exp(z)
    mid = 0.5 * (window[0] + window[1])
    first, second = c[t <= mid], c[t > mid]
    if len(first) == 0 or len(second) == 0:
        raise InsufficientSamples("window halves must both hold samples")
    ok = bool(math.log(second.max()) <= math.log(first.max()) + log_tol + 1e-12)
    return float(c.max()), ok


# ------------------------------------------------------------- travelling waves

@dataclass
class TWEstimate:
    c_star: float
    bracket: tuple
    profile: np.ndarray            # columns phi, v at the upper end
    trace: list = field(default_factory=list)   # (c, "SUPER"/"SUB")


def _launch(m, p, fp1, c, eps0):
    """|v| at phi = 1 - eps0 on the unstable manifold of (1, 0)."""
    g = m * abs(fp1)
    if p == 2.0:
        # linear saddle: e' = v/m, v' = -c v/m - f'(1) e
        lam = (-c / m + math.sqrt(c * c / m ** 2 + 4 * g / m)) / 2.0
        return m * lam * eps0
    q = 1.0 / (p - 1.0)
    if p < 2.0:
        kap = 2.0 / (1.0 + q)
        B = (g / kap) ** (1.0 / (1.0 + q))
        return B * eps0 ** kap
    return (g * eps0 / c) ** (p - 1.0)


def classify_speed(c, m, p, f=None, eta_min=-2000.0, eps0=1e-6, rtol=1e-10,
                   atol=1e-12):
    """SUPER if the orbit leaving (1,0) enters phi=0 with vanishing flux,
    SUB if it reaches phi=0 with non-zero flux and would overshoot.

    The orbit is followed in the (phi, y) plane with y = -v > 0,
    v = |(phi^m)'|^{p-2}(phi^m)', which obeys
        dy/dphi = c - m f(phi) phi^{m-1} y^{-q},   q = 1/(p-1).
    """
    f = f or logistic()
    if m * (p - 1.0) - 1.0 > 1e-12:
        return _classify_degenerate(c, m, p, f, eps0, rtol)
    return _classify_log(c, m, p, f, eta_min, eps0, rtol, atol)


def _classify_log(c, m, p, f, eta_min, eps0, rtol, atol):
    # m(p-1) = 1: follow w = ln y against eta = ln phi,
    #   dw/deta = c e^{eta-w} - m (f/phi) e^{(1+m) eta - (1+q) w}.
    # A SUB orbit flattens (w -> ln y(0)); a SUPER orbit keeps a positive slope.
    q = 1.0 / (p - 1.0)
    w0 = math.log(_launch(m, p, f.f_prime1, c, eps0))
    eta0 = math.log1p(-eps0)

    def h(phi):
        if phi < 1e-200:
            return f.f_prime0
        return float(f(phi)) / phi

    def rhs(eta, y):
        w = y[0]
        a = min(eta - w, 700.0)
        b = min((1.0 + m) * eta - (1.0 + q) * w, 700.0)
        return [c * math.exp(a) - m * h(math.exp(eta)) * math.exp(b)]

    sol = integrate.solve_ivp(rhs, (eta0, eta_min), [w0], method="LSODA",
                              rtol=rtol, atol=atol)
    traj = np.column_stack([np.exp(sol.t), -np.exp(sol.y[0])])
    if not sol.success:
        raise InconclusiveShot(f"integration failed at c={c}: {sol.message}", traj)
    slope = rhs(sol.t[-1], sol.y[:, -1])[0]
    if slope < 1e-3:
        return "SUB", traj
    if slope > 0.05:
        return "SUPER", traj
    raise InconclusiveShot(f"slope {slope:.3g} at eta={eta_min} is ambiguous (c={c})", traj)


def _classify_degenerate(c, m, p, f, eps0, rtol, phi_end=1e-12, y_tol=1e-8):
    # m(p-1) > 1: SUPER orbits collapse onto y ~ phi^{m(p-1)}, SUB orbits
    # arrive at phi = 0 with y(0) > 0.  w = ln y keeps the stiff tail finite.
    q = 1.0 / (p - 1.0)
    w0 = math.log(_launch(m, p, f.f_prime1, c, eps0))

    def rhs(phi, y):
        w = y[0]
        g = m * float(f(phi)) * phi ** (m - 1.0)
        return [c * math.exp(min(-w, 700.0)) - g * math.exp(min(-(1.0 + q) * w, 700.0))]

    for method in ("LSODA", "Radau"):
        sol = integrate.solve_ivp(rhs, (1.0 - eps0, phi_end), [w0], method=method,
                                  rtol=rtol, atol=1e-10)
        if sol.success:
            break
    traj = np.column_stack([sol.t, -np.exp(sol.y[0])])
    if not sol.success:
        raise InconclusiveShot(f"integration failed at c={c}: {sol.message}", traj)
    return ("SUB" if math.exp(sol.y[0, -1]) > y_tol else "SUPER"), traj


def critical_speed_shooting(m, p, f=None, tol=1e-3, c_lo=0.0, c_hi=None,
                            **kw):
    """Bisection for the minimal admissible travelling-wave speed."""
    if m * (p - 1.0) - 1.0 < -1e-12:
        raise ParameterError("travelling waves need m(p-1) >= 1")
    f = f or logistic()
    trace = []
    if c_hi is None:
        c_hi = 1.0
        while True:
            cls, traj_hi = classify_speed(c_hi, m, p, f, **kw)
            trace.append((c_hi, cls))
            if cls == "SUPER":
                break
            c_lo = c_hi
            c_hi *= 2.0
            if c_hi > 1e6:
                raise InconclusiveShot("no SUPER speed below 1e6")
    else:
        cls, traj_hi = classify_speed(c_hi, m, p, f, **kw)
        trace.append((c_hi, cls))
        if cls != "SUPER":
            raise InconclusiveShot(f"upper bracket c={c_hi} is not SUPER")
    while c_hi - c_lo > tol:
        c = 0.5 * (c_lo + c_hi)
        cls, traj = classify_speed(c, m, p, f, **kw)
        trace.append((c, cls))
        if cls == "SUPER":
            c_hi, traj_hi = c, traj
        else:
            c_lo = c
    sup = [c for c, k in trace if k == "SUPER"]
    sub = [c for c, k in trace if k == "SUB"]
    if sup and sub and min(sup) < max(sub):
        raise InconclusiveShot("classification is not monotone in c")
    return TWEstimate(0.5 * (c_lo + c_hi), (c_lo, c_hi), traj_hi, trace)
