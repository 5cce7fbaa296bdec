"""Ricci flow and normalized Ricci flow on reduced state spaces.

Three state kinds are supported:

* :class:`~riccilab.profile.WarpedState` -- rotationally symmetric surfaces and
  3-manifolds, evolved by a compiled RK4 kernel in a relaxed-ratio gauge (see
  :class:`~riccilab.profile.Gauge`);
* :class:`HomogeneousFlowState` -- diagonal left-invariant metrics on Nil/Sol;
* :class:`CurvODEState` -- the curvature-operator eigenvalue ODE with the
  diffusion term dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from . import kernels
from .errors import BlowUp, CflViolation, NonConvergence, NotMaximal, UnsupportedReduction
from .geometries import HomogeneousState, homogeneous_ricci, homogeneous_rhs
from .profile import Profile, WarpedState

# hard stability bound for explicit RK4 on the profile PDE, in units of ds_min^2
CFL_HARD = 0.5


@dataclass(frozen=True)
class HomogeneousFlowState:
    t: float
    hs: HomogeneousState

    reduction = "Homogeneous"

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([self.hs.A, self.hs.B, self.hs.C])

    def scalar(self) -> float:
        return homogeneous_ricci(self.hs)[1]

    def volume(self) -> float:
        """Volume of the unit-coordinate cell, sqrt(ABC)."""
        return math.sqrt(self.hs.A * self.hs.B * self.hs.C)

    def max_abs_sectional(self) -> float:
        # on a unimodular Milnor frame the sectional curvatures of frame planes are
        # K_12 = (r1 + r2 - r3)/2 and cyclic, with r the Ricci eigenvalues
        r, _ = homogeneous_ricci(self.hs)
        K = 0.5 * np.array([r[0] + r[1] - r[2], r[1] + r[2] - r[0], r[2] + r[0] - r[1]])
        return float(np.max(np.abs(K)))


@dataclass(frozen=True)
class CurvODEState:
    t: float
    alpha: np.ndarray

    reduction = "CurvODE"

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float).reshape(3))

    def scalar(self) -> float:
        return float(self.alpha.sum())

    def max_abs_sectional(self) -> float:
        return float(np.max(np.abs(self.alpha))) / 2.0

    def volume(self) -> float:
        return float("nan")


FlowState = Union[WarpedState, HomogeneousFlowState, CurvODEState]


# ---------------------------------------------------------------------------
# single steps

def cfl_limit(s: WarpedState, c_cfl: float = CFL_HARD) -> float:
    ds = float(np.min(np.exp(s.a))) * s.profile.dx
    return c_cfl * ds * ds


def alpha_rhs(alpha: np.ndarray) -> np.ndarray:
    a1, a2, a3 = alpha
    return np.array([a1 * a1 + a2 * a3, a2 * a2 + a3 * a1, a3 * a3 + a1 * a2])


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _homog_rate(brackets, normalized):
    def f(y):
        hs = HomogeneousState(brackets, *y)
        rate = homogeneous_rhs(hs)
        if normalized:
            rate = rate + (2.0 / 3.0) * homogeneous_ricci(hs)[1] * y
        return rate
    return f


def _advance(s: FlowState, dt: float, normalized: bool, check_cfl: bool = True) -> FlowState:
    if not dt > 0:
        raise CflViolation(f"time step must be positive, got {dt}")
    if isinstance(s, WarpedState):
        if check_cfl and dt > cfl_limit(s) * (1 + 1e-12):
            raise CflViolation(f"dt={dt:.3e} exceeds stability limit {cfl_limit(s):.3e}")
        p = s.profile
        if p.k >= 2 and p.base != "sphere":
            raise UnsupportedReduction("k = 2 flows are only supported on the sphere base")
        l0, r0 = p.boundary_values(s.t)
        l1, r1 = p.boundary_values(s.t + 0.5 * dt)
        l2, r2 = p.boundary_values(s.t + dt)
        a, lam = kernels.rk4_step(s.a, s.lam, *s.kernel_geometry(), (l0, l1, l2), (r0, r1, r2),
                                  dt, normalized)
        new = s.with_a(a, s.t + dt, lam)
        if normalized:
            # remove quadrature drift of the volume
            target = s.volume()
            new = new.with_a(new.a + math.log(target / new.volume()) / p.n)
        return new
    if isinstance(s, HomogeneousFlowState):
        y = _rk4(_homog_rate(s.hs.brackets, normalized), s.coeffs, dt)
        if normalized:
            y = y * (s.volume() / math.sqrt(np.prod(y))) ** (2.0 / 3.0)
        return HomogeneousFlowState(s.t + dt, HomogeneousState(s.hs.brackets, *y))
    if isinstance(s, CurvODEState):
        return CurvODEState(s.t + dt, _rk4(alpha_rhs, s.alpha, dt))
    raise UnsupportedReduction(f"cannot step {type(s).__name__}")


def _check_ceiling(s: FlowState, ceiling: float):
    m = s.max_abs_sectional()
    if not np.isfinite(m) or m > ceiling:
        raise BlowUp(f"curvature {m:.3e} exceeded ceiling {ceiling:.3e} at t={s.t:.9g}", s.t, m)


def step(s: FlowState, dt: float, ceiling: float = 1e6) -> FlowState:
    """One explicit RK4 step of Ricci flow."""
    new = _advance(s, dt, normalized=False)
    _check_ceiling(new, ceiling)
    return new


def step_normalized(s: FlowState, dt: float, ceiling: float = 1e6) -> FlowState:
    """One RK4 step of the volume-preserving normalized flow."""
    if isinstance(s, CurvODEState):
        raise UnsupportedReduction("normalized flow is not defined for the curvature ODE")
    new = _advance(s, dt, normalized=True)
    _check_ceiling(new, ceiling)
    return new


def warped_velocity(s: WarpedState) -> np.ndarray:
    """Rate of ``a`` under Ricci flow in the relaxed-ratio gauge."""
    return s.fields()[3]


# ---------------------------------------------------------------------------
# trajectories

@dataclass
class FlowSettings:
    t_end: float
    dt_max: float = 1e-2
    c_cfl: float = 0.2
    dt_min: float = 1e-14
    ceiling: float = 1e6
    normalized: bool = False
    cadence: Optional[float] = None
    record_every_step: bool = False

    def __post_init__(self):
        if not (self.t_end >= 0 and self.dt_max > 0 and self.c_cfl > 0 and self.dt_min > 0 and self.ceiling > 0):
            raise ValueError("flow settings must be positive")
        if self.c_cfl > CFL_HARD:
            raise CflViolation(f"C_cfl={self.c_cfl} exceeds the stability bound {CFL_HARD}")


@dataclass(frozen=True)
class Diagnostics:
    t: float
    volume: float
    R_min: float
    R_max: float
    max_sec: float
    dt: float
    extinction_flag: bool = False


def diagnose(s: FlowState, dt: float = 0.0, extinct: bool = False) -> Diagnostics:
    if isinstance(s, WarpedState):
        R = s.scalar()
        return Diagnostics(s.t, s.volume(), float(R.min()), float(R.max()), s.max_abs_sectional(), dt, extinct)
    R = s.scalar()
    return Diagnostics(s.t, s.volume(), R, R, s.max_abs_sectional(), dt, extinct)


@dataclass
class FlowTrajectory:
    states: List[FlowState] = field(default_factory=list)
    diagnostics: List[Diagnostics] = field(default_factory=list)
    status: str = "Completed"
    extinction_time: Optional[float] = None
    steps: int = 0

    def append(self, s: FlowState, dt: float = 0.0, extinct: bool = False):
        if self.states and not s.t > self.states[-1].t:
            raise ValueError("trajectory times must increase strictly")
        self.states.append(s)
        self.diagnostics.append(diagnose(s, dt, extinct))

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def recompute_diagnostics(self):
        self.diagnostics = [diagnose(s, d.dt, d.extinction_flag) for s, d in zip(self.states, self.diagnostics)]

    def state_at(self, t: float, tol: float = 1e-12) -> FlowState:
        ts = self.times
        i = int(np.argmin(np.abs(ts - t)))
        if abs(ts[i] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"no stored state at t={t}")
        return self.states[i]


def choose_dt(s: FlowState, st: FlowSettings) -> float:
    if isinstance(s, WarpedState):
        ds = float(np.min(np.exp(s.a))) * s.profile.dx
        R = s.scalar()
        dt = min(st.dt_max, st.c_cfl * ds * ds)
        rmax = float(np.max(np.abs(R)))
    else:
        rmax = abs(s.scalar()) if isinstance(s, HomogeneousFlowState) else float(np.max(np.abs(s.alpha)))
        dt = st.dt_max
    if rmax > 0:
        dt = min(dt, st.c_cfl / rmax)
    return dt


def _classify_blowup(s: FlowState) -> str:
    if isinstance(s, WarpedState):
        R = s.scalar()
        if R.min() > 0 and R.min() / R.max() >= 0.5:
            return "Extinct"
        return "BlownUp"
    if isinstance(s, CurvODEState):
        a = s.alpha
        if a.min() > 0 and a.min() / a.max() >= 0.5:
            return "Extinct"
    return "BlownUp"


def _output_times(t0: float, st: FlowSettings) -> List[float]:
    if not st.cadence:
        return [st.t_end]
    m = int(math.floor((st.t_end - t0) / st.cadence + 1e-9))
    out = [t0 + j * st.cadence for j in range(1, m + 1)]
    if not out or st.t_end - out[-1] > 1e-12 * max(1.0, st.t_end):
        out.append(st.t_end)
    return out


def _run_warped(s: WarpedState, st: FlowSettings, traj: FlowTrajectory) -> FlowTrajectory:
    p = s.profile
    if p.k >= 2 and p.base != "sphere":
        raise UnsupportedReduction("k = 2 flows are only supported on the sphere base")
    geo = s.kernel_geometry()
    max_steps = 1 if st.record_every_step else 2**62
    for target in _output_times(s.t, st):
        while s.t < target:
            a, lam, t, n, status, dt = kernels.evolve(
                s.a, s.lam, *geo, p.dirichlet, s.t, target, st.dt_max, st.c_cfl, st.dt_min,
                st.ceiling, st.normalized, max_steps)
            traj.steps += int(n)
            if n:
                s = s.with_a(a, t, lam)
            if status == 1:
                traj.status = _classify_blowup(s)
                traj.extinction_time = s.t + dt
                if traj.states[-1] is not s:
                    traj.append(s, dt)
                traj.diagnostics[-1] = diagnose(s, dt, traj.status == "Extinct")
                return traj
            if status == 2:
                raise NonConvergence(f"time step underflow dt={dt:.3e} at t={s.t:.9g}",
                                     {"t": s.t, "dt": dt, "max_sec": s.max_abs_sectional()})
            if st.record_every_step or s.t >= target:
                traj.append(s, dt)
    return traj


def run(initial: FlowState, settings: FlowSettings) -> FlowTrajectory:
    """Adaptive evolution until ``t_end``, extinction or the curvature ceiling."""
    st = settings
    traj = FlowTrajectory()
    traj.append(initial)
    if isinstance(initial, WarpedState):
        return _run_warped(initial, st, traj)
    s = initial
    advance = step_normalized if st.normalized else step
    for target in _output_times(s.t, st):
        while s.t < target:
            dt = choose_dt(s, st)
            last = s.t + dt >= target - 1e-12 * max(1.0, abs(target))
            if last:
                dt = target - s.t
            if dt < st.dt_min:
                raise NonConvergence(f"time step underflow dt={dt:.3e} at t={s.t:.9g}",
                                     {"t": s.t, "dt": dt, "max_sec": s.max_abs_sectional()})
            try:
                new = advance(s, dt, st.ceiling)
            except BlowUp:
                traj.status = _classify_blowup(s)
                traj.extinction_time = s.t + dt
                if traj.states[-1] is not s:
                    traj.append(s, dt)
                traj.diagnostics[-1] = diagnose(s, dt, traj.status == "Extinct")
                return traj
            if last:
                new = _retime(new, target)
            traj.steps += 1
            s = new
            if st.record_every_step or s.t >= target:
                traj.append(s, dt)
    return traj


def _retime(s: FlowState, t: float) -> FlowState:
    if isinstance(s, HomogeneousFlowState):
        return HomogeneousFlowState(t, s.hs)
    if isinstance(s, CurvODEState):
        return CurvODEState(t, s.alpha)
    return s.with_a(s.a, t)


# ---------------------------------------------------------------------------
# rescaling, necks and distances

def parabolic_rescale(traj: FlowTrajectory, x0: int, t0: float, tol: float = 1e-9) -> FlowState:
    """Rescale by ``lambda_0 = R(x0, t0)``; the result sits at rescaled time 0."""
    s0 = traj.state_at(t0)
    if not isinstance(s0, WarpedState):
        raise UnsupportedReduction("parabolic rescaling needs a profile state")
    lam = float(s0.scalar()[x0])
    if not lam > 0:
        raise NotMaximal(f"R(x0, t0) = {lam:.3e} is not positive")
    for s in traj.states:
        if s.t <= t0 and float(np.max(s.scalar())) > lam * (1 + tol):
            raise NotMaximal(f"R exceeds R(x0,t0)={lam:.6g} at t={s.t:.6g}")
    return s0.with_a(s0.a + 0.5 * math.log(lam), 0.0)


def rescale_state(s: FlowState, lam: float) -> FlowState:
    """Parabolic rescaling of a single state: metric times ``lam``, time times ``lam``."""
    if isinstance(s, WarpedState):
        return s.with_a(s.a + 0.5 * math.log(lam), lam * s.t)
    if isinstance(s, HomogeneousFlowState):
        hs = s.hs
        return HomogeneousFlowState(lam * s.t, HomogeneousState(hs.brackets, lam * hs.A, lam * hs.B, lam * hs.C))
    return CurvODEState(lam * s.t, s.alpha / lam)


@dataclass(frozen=True)
class NeckReport:
    found: bool
    center_index: int
    epsilon: float
    rescaled_radius_error: float
    length_in_rescaled_units: float


def detect_neck(s: FlowState, epsilon: float) -> NeckReport:
    """C^0 epsilon-neck search on the fibre-radius profile."""
    if not isinstance(s, WarpedState) or s.profile.k != 2:
        raise UnsupportedReduction("neck detection needs a 3-dimensional warped state")
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    R = s.scalar()
    phi = s.phi
    sarc = s.arclength()
    need = 1.0 / epsilon
    N = s.profile.N
    best = None
    for i in range(N):
        if R[i] <= 0:
            continue
        rho = phi * math.sqrt(R[i] / 2.0)
        ok = np.abs(rho - 1.0) < epsilon
        if not ok[i]:
            continue
        lo = i
        while lo > 0 and ok[lo - 1]:
            lo -= 1
        hi = i
        while hi < N - 1 and ok[hi + 1]:
            hi += 1
        sq = math.sqrt(R[i])
        left = sq * (sarc[i] - sarc[lo])
        right = sq * (sarc[hi] - sarc[i])
        if left >= need and right >= need:
            err = float(np.max(np.abs(rho[lo:hi + 1] - 1.0)))
            key = (R[i], -abs(i - 0.5 * (lo + hi)))
            cand = (key, i, err, left + right)
            if best is None or cand[0] > best[0]:
                best = cand
    if best is None:
        return NeckReport(False, -1, epsilon, float("nan"), 0.0)
    _, i, err, length = best
    return NeckReport(True, i, epsilon, err, length)


def distance_between(s: FlowState, a: int, b: int) -> float:
    """Meridian distance between grid nodes ``a`` and ``b`` (0..N, poles included)."""
    if not isinstance(s, WarpedState):
        raise UnsupportedReduction("distances need a profile state")
    return s.distance(a, b)


# ---------------------------------------------------------------------------
# initial data

def round_state(n: int, N: int, r: float = 1.0) -> WarpedState:
    """Round S^n(r), n in {2, 3}."""
    return WarpedState.make(Profile("sphere", n - 1, N), math.log(r))


def perturbed_surface(N: int, amp: float = 0.3, mode: int = 2) -> WarpedState:
    """exp(2u) g_{S^2} with u = amp cos(mode x)."""
    prof = Profile("sphere", 1, N)
    return WarpedState.make(prof, amp * np.cos(mode * prof.x))


def cigar_state(N: int, X: float = 3.0, t0: float = 0.0) -> WarpedState:
    """Cigar soliton on the disk of arclength radius X with the exact solution on the wall.

    Coordinates: ``x`` is arclength at t0 = 0, so ``g = exp(2a)(dx^2 + tanh(x)^2 dtheta^2)``
    and the exact evolution is ``a = log cosh x - log(e^{4t} + sinh(x)^2) / 2``.
    """
    def wall(t):
        return 0.0, math.log(math.cosh(X)) - 0.5 * math.log(math.exp(4 * (t0 + t)) + math.sinh(X) ** 2)

    prof = Profile("plane", 1, N, X, wall="dirichlet", dirichlet=wall)
    x = prof.x
    c = np.log(np.tanh(x) / x)
    a = np.log(np.cosh(x)) - 0.5 * np.log(math.exp(4 * t0) + np.sinh(x) ** 2)
    return WarpedState.make(prof, a, c)


def cigar_exact_a(prof: Profile, t: float) -> np.ndarray:
    x = prof.x
    return np.log(np.cosh(x)) - 0.5 * np.log(math.exp(4 * t) + np.sinh(x) ** 2)


def _plateau(x, centre, half, width):
    return 0.5 * (np.tanh((x - centre + half) / width) - np.tanh((x - centre - half) / width))


def dumbbell_state(N: int, neck: float = 0.3, neck_half_width: float = 0.5,
                   stretch: float = 3.0, dip: float = 0.05, edge: float = 0.1) -> WarpedState:
    """S^3 with two unit bulbs joined by a thin neck, waist at the equator.

    The fibre radius is ``sin(x) m(x)`` with ``m`` dropping to ``neck`` on the
    middle plateau (slightly deeper at the centre), and the radial stretch
    ``q(x)`` lengthens the neck so its length is several radii.
    """
    prof = Profile("sphere", 2, N)
    x = prof.x
    B = _plateau(x, 0.5 * math.pi, neck_half_width, edge)
    centre = np.exp(-((x - 0.5 * math.pi) / 0.25) ** 2)
    m = (1.0 - (1.0 - neck) * B) * (1.0 - dip * centre)
    q = 1.0 + (stretch - 1.0) * B
    return WarpedState.make(prof, np.log(q), np.log(m / q))
