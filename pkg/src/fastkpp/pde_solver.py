"""Radial finite-volume solver for u_t = r^{1-N}(r^{N-1}|(u^m)_r|^{p-2}(u^m)_r)_r + f(u).

Explicit, conservative, with an adaptive step chosen so that the scheme is
monotone (the diagonal coefficient of the update stays non-negative).  The
reaction is split symmetrically around the diffusion step.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence
import math

import numpy as np
from numba import njit

from .analytic_solutions import bernoulli_for_datum, surface_area
from .model_params import ParameterError, ReactionSpec, self_similar_exponents

MIN_CELLS = 64


class StiffnessError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics


# ------------------------------------------------------------------ grid

@dataclass(frozen=True, eq=False)
class RadialGrid:
    mode: str
    edges: np.ndarray
    N: int

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or len(e) - 1 < MIN_CELLS:
            raise ParameterError(f"grid needs at least {MIN_CELLS} cells")
        if np.any(np.diff(e) <= 0):
            raise ParameterError("grid edges must be strictly increasing")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @property
    def cells(self):
        return len(self.edges) - 1

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def volumes(self):
        e, N = self.edges, self.N
        return surface_area(N) / N * (e[1:] ** N - e[:-1] ** N)

    @property
    def areas(self):
        return surface_area(self.N) * self.edges ** (self.N - 1)


def build_grid(mode="Uniform", r_max=10.0, cells=256, N=1, r_inner=0.0,
               r_core=None):
    """Uniform on [0, r_max], LogUniform on [r_inner, r_max], or Composite.

    Composite is a uniform core [0, r_core] glued to a geometric grid with
    matching spacing at r_core; it keeps the symmetry point r=0 while giving
    constant resolution in ln r further out.
    """
    cells = int(cells)
    if cells < MIN_CELLS:
        raise ParameterError(f"grid needs at least {MIN_CELLS} cells, got {cells}")
    if not r_max > r_inner >= 0:
        raise ParameterError("need r_max > r_inner >= 0")
    if mode == "Uniform":
        edges = np.linspace(0.0, r_max, cells + 1)
    elif mode == "LogUniform":
        if not r_inner > 0:
            raise ParameterError("LogUniform needs r_inner > 0")
        edges = np.exp(np.linspace(math.log(r_inner), math.log(r_max), cells + 1))
    elif mode == "Composite":
        if r_core is None or not 0 < r_core < r_max:
            raise ParameterError("Composite needs 0 < r_core < r_max")
        h = (1.0 + math.log(r_max / r_core)) / cells
        n_core = max(1, min(cells - 1, int(round(1.0 / h))))
        core = np.linspace(0.0, r_core, n_core + 1)
        outer = np.exp(np.linspace(math.log(r_core), math.log(r_max),
                                   cells - n_core + 1))
        edges = np.concatenate([core, outer[1:]])
    else:
        raise ParameterError(f"unknown grid mode {mode!r}")
    return RadialGrid(mode, edges, int(N))


# ------------------------------------------------------------------ config

NEUMANN = "HomogeneousNeumann"


@dataclass(frozen=True)
class DirichletFromField:
    field: Callable


@dataclass(frozen=True)
class PowerFarField:
    """Ghost value H r^lam with H read off the outermost cell."""
    lam: float


@dataclass(frozen=True)
class Full:
    f: ReactionSpec


@dataclass(frozen=True)
class Linearized:
    rate: float


@dataclass(frozen=True)
class DoublyNonlinear:
    m: float
    p: float


@dataclass(frozen=True)
class PLaplacian:
    p: float


def default_eps_reg(p):
    """Flux regularization: 1e-8 for p <= 2.  For p > 2 the flux is
    degenerate, not singular, and any eps adds a linear diffusion
    eps^{p-2} s where |s| < eps, which drags power tails outward; there a
    negligible value is used."""
    return 1e-8 if p <= 2 else 1e-100


@dataclass
class SolverConfig:
    operator: object
    t_end: float
    snapshot_times: Sequence[float] = ()
    reaction: object = None
    outer_bc: object = NEUMANN
    eps_reg: Optional[float] = None      # None: default_eps_reg(p)
    cfl: float = 0.4
    boundary_alarm: float = 1e-6
    u_floor: float = 1e-30
    dt_min: float = 1e-14
    max_steps: int = 50_000_000
    tol_clip: float = 1e-10

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ParameterError("cfl must lie in (0, 1]")
        ts = tuple(float(x) for x in self.snapshot_times) or (float(self.t_end),)
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ParameterError("snapshot times must be sorted")
        if ts[0] < 0 or ts[-1] > self.t_end * (1 + 1e-15):
            raise ParameterError("snapshot times must lie in [0, t_end]")
        self.snapshot_times = ts
        if self.eps_reg is None:
            self.eps_reg = default_eps_reg(self.mp[1])

    @property
    def mp(self):
        op = self.operator
        if isinstance(op, DoublyNonlinear):
            return float(op.m), float(op.p)
        if isinstance(op, PLaplacian):
            return 1.0, float(op.p)
        raise ParameterError(f"unknown operator {op!r}")


@dataclass
class RadialState:
    t: float
    u: np.ndarray


@dataclass
class Diagnostics:
    mass: list = field(default_factory=list)
    dt: list = field(default_factory=list)        # (t, steps, dt_min, dt_max)
    boundary_max: list = field(default_factory=list)
    clip_events: int = 0
    boundary_alarm: bool = False
    monotonicity_violation: Optional[float] = None
    steps: int = 0


@dataclass
class RunResult:
    snapshots: list
    diagnostics: Diagnostics
    grid: RadialGrid

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    def at(self, t):
        for s in self.snapshots:
            if abs(s.t - t) <= 1e-12 * max(1.0, abs(t)):
                return s
        raise KeyError(t)


# ------------------------------------------------------------------ kernels

@njit(cache=True)
def _phi(s, p, eps):
    if p == 2.0:
        return s
    return (s * s + eps * eps) ** (0.5 * (p - 2.0)) * s


@njit(cache=True)
def _dphi(s, p, eps):
    if p == 2.0:
        return 1.0
    s2 = s * s
    e2 = eps * eps
    return (s2 + e2) ** (0.5 * (p - 4.0)) * ((p - 1.0) * s2 + e2)


@njit(cache=True)
def _stable_dt(u, m, p, eps, floor, cfl, inv_d, area, vol, bc_kind, ghost_u):
    n = u.shape[0]
    acc = np.zeros(n)
    w_prev = u[0] ** m
    for j in range(n - 1):
        w_next = u[j + 1] ** m
        # a face between two exact zeros carries no flux and sets no bound
        if w_prev != 0.0 or w_next != 0.0:
            s = (w_next - w_prev) * inv_d[j]
            g = area[j] * _dphi(s, p, eps) * inv_d[j]
            acc[j] += g
            acc[j + 1] += g
        w_prev = w_next
    if bc_kind != 0 and (w_prev != 0.0 or ghost_u != 0.0):
        s = (ghost_u ** m - w_prev) * inv_d[n - 1]
        acc[n - 1] += area[n - 1] * _dphi(s, p, eps) * inv_d[n - 1]
    rmax = 0.0
    for i in range(n):
        ui = u[i] if u[i] > floor else floor
        r = m * ui ** (m - 1.0) * acc[i] / vol[i]
        if r > rmax:
            rmax = r
    if rmax == 0.0:
        return np.inf
    return cfl / rmax


@njit(cache=True)
def _diffuse(u, dt, m, p, eps, inv_d, area, vol, bc_kind, ghost_u):
    """One conservative explicit step in place; returns the outer-face flux."""
    n = u.shape[0]
    flux = np.empty(n)
    w_prev = u[0] ** m
    for j in range(n - 1):
        w_next = u[j + 1] ** m
        flux[j] = area[j] * _phi((w_next - w_prev) * inv_d[j], p, eps)
        w_prev = w_next
    if bc_kind != 0:
        flux[n - 1] = area[n - 1] * _phi((ghost_u ** m - w_prev) * inv_d[n - 1], p, eps)
    else:
        flux[n - 1] = 0.0
    left = 0.0
    for i in range(n):
        u[i] += dt / vol[i] * (flux[i] - left)
        left = flux[i]
    return flux[n - 1]


@njit(cache=True)
def _react(u, h, kind, rate):
    if kind == 1:      # logistic u(1-u), exact flow
        e = math.exp(h)
        for i in range(u.shape[0]):
            ui = u[i]
            u[i] = ui * e / (1.0 - ui + ui * e)
    elif kind == 2:    # linear rate*u
        e = math.exp(rate * h)
        for i in range(u.shape[0]):
            u[i] *= e


@njit(cache=True)
def _advance(u, t, t_target, m, p, eps, floor, cfl, inv_d, area, vol, rc_last,
             r_ghost, bc_kind, bc_value, react_kind, react_rate, upper_clip,
             dt_min, max_steps, stats):
    """Advance u in place toward t_target.

    bc_kind: 0 Neumann, 1 fixed ghost value, 2 ghost = (u_last/rc^lam) r_ghost^lam.
    stats: [dt_min, dt_max, boundary_max, clips, boundary_flux_time_integral].
    Returns (t, steps, status); status 0 reached, 1 dt underflow, 2 budget.
    """
    n = u.shape[0]
    steps = 0
    while t < t_target:
        if steps >= max_steps:
            return t, steps, 2
        ghost = 0.0
        if bc_kind == 1:
            ghost = bc_value
        elif bc_kind == 2:
            ghost = u[n - 1] * (r_ghost / rc_last) ** bc_value
        dt = _stable_dt(u, m, p, eps, floor, cfl, inv_d, area, vol, bc_kind, ghost)
        if dt < dt_min:
            return t, steps, 1
        last = False
        if t + dt >= t_target * (1.0 - 1e-15) or t + dt >= t_target:
            dt = t_target - t
            last = True
        if react_kind != 0:
            _react(u, 0.5 * dt, react_kind, react_rate)
        fl = _diffuse(u, dt, m, p, eps, inv_d, area, vol, bc_kind, ghost)
        if react_kind != 0:
            _react(u, 0.5 * dt, react_kind, react_rate)
        for i in range(n):
            if u[i] < 0.0:
                if u[i] < -1e-300:
                    stats[3] += 1.0
                u[i] = 0.0
            elif upper_clip and u[i] > 1.0:
                stats[3] += 1.0
                u[i] = 1.0
        stats[4] += dt * fl
        if dt < stats[0]:
            stats[0] = dt
        if dt > stats[1]:
            stats[1] = dt
        if u[n - 1] > stats[2]:
            stats[2] = u[n - 1]
        t = t_target if last else t + dt
        steps += 1
    return t, steps, 0


# ------------------------------------------------------------------ API

def _geometry(grid):
    c = grid.centers
    e = grid.edges
    d = np.empty(grid.cells)
    d[:-1] = np.diff(c)
    r_ghost = 2.0 * e[-1] - c[-1]
    d[-1] = r_ghost - c[-1]
    return 1.0 / d, grid.areas[1:].copy(), grid.volumes, r_ghost


def dnl_flux(u_left, u_right, r_face, dr, m, p, N=1, eps_reg=1e-8):
    """Face flux r^{N-1} Phi(s), s = (u_R^m - u_L^m)/dr (no surface constant)."""
    s = (np.asarray(u_right, dtype=float) ** m
         - np.asarray(u_left, dtype=float) ** m) / dr
    if p == 2:
        phi = s
    else:
        phi = (s * s + eps_reg ** 2) ** ((p - 2.0) / 2.0) * s
    return np.asarray(r_face, dtype=float) ** (N - 1) * phi


def mass(state, grid):
    """Full-space mass: sum of u_i |cell_i| with the sphere constant included."""
    u = state.u if isinstance(state, RadialState) else np.asarray(state)
    return float(np.dot(u, grid.volumes))


def _reaction_kind(cfg):
    r = cfg.reaction
    if r is None:
        return 0, 0.0, None
    if isinstance(r, Linearized):
        return 2, float(r.rate), None
    if isinstance(r, Full):
        if r.f.kind == "Logistic":
            return 1, 0.0, None
        return 3, 0.0, r.f
    raise ParameterError(f"unknown reaction mode {r!r}")


def _rk4(f, u, h):
    k1 = f(u)
    k2 = f(u + 0.5 * h * k1)
    k3 = f(u + 0.5 * h * k2)
    k4 = f(u + h * k3)
    return u + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def step(state, grid, config):
    """One adaptive step; returns a new RadialState."""
    u = np.array(state.u, dtype=float)
    m, p = config.mp
    inv_d, area, vol, r_ghost = _geometry(grid)
    bc_kind, ghost = _ghost(config.outer_bc, u, grid, r_ghost, state.t)
    dt = _stable_dt(u, m, p, config.eps_reg, config.u_floor, config.cfl,
                    inv_d, area, vol, bc_kind, ghost)
    if dt < config.dt_min:
        raise StiffnessError(f"dt={dt:.3e} below {config.dt_min:.1e} at t={state.t}")
    if not math.isfinite(dt):
        dt = config.t_end - state.t if config.t_end > state.t else 1.0
    kind, rate, f = _reaction_kind(config)
    if kind == 3:
        u = _rk4(f, u, 0.5 * dt)
    else:
        _react(u, 0.5 * dt, kind, rate)
    _diffuse(u, dt, m, p, config.eps_reg, inv_d, area, vol, bc_kind, ghost)
    if kind == 3:
        u = _rk4(f, u, 0.5 * dt)
    else:
        _react(u, 0.5 * dt, kind, rate)
    np.maximum(u, 0.0, out=u)
    return RadialState(state.t + dt, u)


def _ghost(bc, u, grid, r_ghost, t):
    if bc == NEUMANN or bc is None:
        return 0, 0.0
    if isinstance(bc, DirichletFromField):
        return 1, float(bc.field(r_ghost, t))
    if isinstance(bc, PowerFarField):
        rc = grid.centers[-1]
        return 1, float(u[-1] * (r_ghost / rc) ** bc.lam)
    raise ParameterError(f"unknown outer boundary condition {bc!r}")


def _sample(datum, grid):
    if callable(datum):
        u0 = np.asarray(datum(grid.centers), dtype=float)
    else:
        u0 = np.asarray(datum, dtype=float)
    if u0.shape != (grid.cells,):
        u0 = np.broadcast_to(u0, (grid.cells,)).astype(float)
    if not np.all(np.isfinite(u0)) or np.any(u0 < 0):
        raise ParameterError("datum must be finite and non-negative")
    return np.array(u0, dtype=float)


def run(datum, grid, config):
    """Integrate from the datum (sampled at cell centres) to each snapshot time."""
    u = _sample(datum, grid)
    kind, rate, f = _reaction_kind(config)
    if kind in (1, 3) and (u.max() > 1 + config.tol_clip):
        raise ParameterError("datum must lie in [0,1] in reaction mode Full")
    m, p = config.mp
    inv_d, area, vol, r_ghost = _geometry(grid)
    rc_last = grid.centers[-1]
    bc = config.outer_bc
    diag = Diagnostics()
    snaps = []
    t = 0.0
    stats = np.array([np.inf, 0.0, u[-1], 0.0, 0.0])
    python_loop = kind == 3 or isinstance(bc, DirichletFromField)
    if bc == NEUMANN or bc is None:
        bc_kind, bc_val = 0, 0.0
    elif isinstance(bc, PowerFarField):
        bc_kind, bc_val = 2, float(bc.lam)
    elif isinstance(bc, DirichletFromField):
        bc_kind, bc_val = 1, 0.0
    else:
        raise ParameterError(f"unknown outer boundary condition {bc!r}")
    upper = kind in (1, 3)
    total = 0
    for ts in config.snapshot_times:
        stats[0], stats[1], stats[2] = np.inf, 0.0, u[-1]
        n0 = total
        while t < ts:
            if python_loop:
                if isinstance(bc, DirichletFromField):
                    bc_val = float(bc.field(r_ghost, t))
                if kind == 3:
                    t = _python_step(u, t, ts, m, p, config, inv_d, area, vol,
                                     bc_kind, bc_val, f, stats)
                    total += 1
                    continue
                budget = 1
            else:
                budget = config.max_steps - total
            t, k, status = _advance(u, t, ts, m, p, config.eps_reg, config.u_floor,
                                    config.cfl, inv_d, area, vol, rc_last, r_ghost,
                                    bc_kind, bc_val, kind, rate, upper,
                                    config.dt_min, budget, stats)
            total += k
            if status == 1:
                diag.steps = total
                raise StiffnessError(f"dt below {config.dt_min:.1e} at t={t:.6g}", diag)
            if total >= config.max_steps and t < ts:
                diag.steps = total
                raise StiffnessError(f"step budget {config.max_steps} exhausted at t={t:.6g}", diag)
        snaps.append(RadialState(float(ts), u.copy()))
        diag.mass.append(mass(u, grid))
        diag.dt.append((float(ts), total - n0,
                        float(stats[0]) if total > n0 else 0.0, float(stats[1])))
        diag.boundary_max.append(float(stats[2]))
    diag.clip_events = int(stats[3])
    diag.steps = total
    if bc == NEUMANN or bc is None:
        diag.boundary_alarm = bool(max(diag.boundary_max) > config.boundary_alarm)
    return RunResult(snaps, diag, grid)


def _python_step(u, t, t_target, m, p, cfg, inv_d, area, vol, bc_kind, bc_val, f, stats):
    dt = _stable_dt(u, m, p, cfg.eps_reg, cfg.u_floor, cfg.cfl, inv_d, area, vol,
                    bc_kind, bc_val)
    if dt < cfg.dt_min:
        raise StiffnessError(f"dt={dt:.3e} below {cfg.dt_min:.1e} at t={t:.6g}")
    last = t + dt >= t_target
    if last:
        dt = t_target - t
    u[:] = _rk4(f, u, 0.5 * dt)
    _diffuse(u, dt, m, p, cfg.eps_reg, inv_d, area, vol, bc_kind, bc_val)
    u[:] = _rk4(f, u, 0.5 * dt)
    neg = u < 0
    stats[3] += np.count_nonzero(u < -1e-300)
    u[neg] = 0.0
    hi = u > 1.0
    stats[3] += np.count_nonzero(hi)
    u[hi] = 1.0
    stats[0] = min(stats[0], dt)
    stats[1] = max(stats[1], dt)
    stats[2] = max(stats[2], u[-1])
    return t_target if last else t + dt


def run_plap_increasing(lam, grid, config):
    """p-Laplacian flow from |x|^lam with a far field pinned to H r^lam."""
    if not isinstance(config.operator, PLaplacian):
        raise ParameterError("run_plap_increasing needs operator PLaplacian")
    p = float(config.operator.p)
    self_similar_exponents(lam, p)
    cfg = SolverConfig(**{**config.__dict__, "reaction": None,
                          "outer_bc": PowerFarField(float(lam))})
    res = run(lambda r: r ** lam, grid, cfg)
    worst = 0.0
    for s in res.snapshots:
        worst = max(worst, float(np.max(-np.diff(s.u), initial=0.0)))
    if worst > 1e-8:
        res.diagnostics.monotonicity_violation = worst
    return res


def selfsimilar_profile(result, lam, p):
    """(xi, F) per positive snapshot time: xi = r t^{-beta}, F = u t^{alpha}."""
    a, b = self_similar_exponents(lam, p)
    r = result.grid.centers
    out = []
    for s in result.snapshots:
        if s.t > 0:
            out.append((s.t, r * s.t ** (-b), s.u * s.t ** a))
    return out


def front_r_max(params, a0, t_end, rate=1.0, bc_tol=1e-6):
    """Outer radius that keeps a front run clear of the boundary.

    The tail of any datum below min(1, a0 r^{-p/gh}) stays under the
    Bernoulli barrier; the radius is chosen so that the barrier is still
    below bc_tol there at t_end, and at least ten times the e^{sigma* t}
    front radius.
    """
    gh, p = params.gamma_hat, params.p
    S = bernoulli_for_datum(params, a0, rate)
    G = float(S.G(t_end))
    front = 10.0 * math.exp(gh / p * rate * t_end)
    return max(front, 2.0 * (G / bc_tol) ** (gh / p))
