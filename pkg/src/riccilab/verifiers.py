"""Inequality checkers over flow trajectories and heat solutions.

Every checker returns a :class:`~riccilab.reports.CheckReport` whose margin
is signed (negative = violation).  Time derivatives come from differencing
stored output times, never from evolution formulas, so a checker tests the
numerics rather than restating them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_banded

from .errors import (InitialNormalizationViolated, NegativeRicci, NonConvergence,
                     NonPositiveInitialR, UnsupportedReduction)
from .flat import FlatGrid
from .flow import CurvODEState, FlowTrajectory, HomogeneousFlowState
from .geometries import homogeneous_ricci
from .profile import WarpedState
from .reports import CheckReport, array_margins, make_report, not_applicable

POSITIVITY_FLOOR = 1e-12


def _states(traj):
    states = traj.states if isinstance(traj, FlowTrajectory) else list(traj)
    return sorted(states, key=lambda s: s.t)


def _scalar(s) -> np.ndarray:
    return np.atleast_1d(np.asarray(s.scalar(), dtype=float))


def _alpha(s) -> np.ndarray:
    """Curvature-operator eigenvalues (scaled so the unit 3-sphere has 2, 2, 2), shape (cells, 3)."""
    if isinstance(s, CurvODEState):
        return s.alpha[None, :]
    if isinstance(s, HomogeneousFlowState):
        r, _ = homogeneous_ricci(s.hs)
        return np.array([[r[1] + r[2] - r[0], r[2] + r[0] - r[1], r[0] + r[1] - r[2]]])
    if isinstance(s, WarpedState) and s.profile.k == 2:
        return s.curvature_operator()
    raise UnsupportedReduction("needs a three-dimensional reduction")


# ---------------------------------------------------------------------------
# curvature barriers

def scalar_barrier_check(traj, tolerance: float = 1e-6) -> CheckReport:
    """R(x, t) against the solution of dR/dt = 2R^2/n started at min R(0).

    Margins are ``(R - barrier) / max(1, |barrier|)``; times past the
    barrier's own blow-up are skipped.
    """
    states = _states(traj)
    s0 = states[0]
    n = s0.n
    rmin = float(_scalar(s0).min())
    t0 = s0.t

    def margins():
        for s in states:
            dt = s.t - t0
            if abs(rmin) < 1e-14:
                bar = 0.0
            else:
                den = 1.0 / rmin - 2.0 * dt / n
                if rmin > 0 and den <= 0:
                    continue
                bar = 1.0 / den
            yield from array_margins((_scalar(s) - bar) / max(1.0, abs(bar)), s.t)

    return make_report("scalar_barrier", margins(), tolerance, {"min_R0": rmin, "n": n})


def pinching_normalized(s: WarpedState) -> WarpedState:
    """Rescale a 3D warped state so its least curvature eigenvalue is at least -1."""
    nu = float(_alpha(s).min())
    return s.scaled(-nu) if nu < -1 else s


def hamilton_ivey_check(traj, tolerance: float = 1e-6) -> CheckReport:
    """Pinching bounds for 3D flows normalized to ``nu(0) >= -1``.

    ``R >= -6/(4t+1)`` everywhere and, where the least eigenvalue ``nu`` is
    negative, ``R >= 2|nu| (log|nu| + log(1+t) - 3)``.  Margins are relative
    to ``max(1, |bound|)``.
    """
    states = _states(traj)
    nu0 = float(_alpha(states[0]).min())
    if nu0 < -1 - 1e-12:
        raise InitialNormalizationViolated(f"least curvature eigenvalue at t=0 is {nu0:.6g} < -1; rescale first")
    t0 = states[0].t

    def margins():
        for s in states:
            t = s.t - t0
            al = _alpha(s)
            R = al.sum(axis=1)
            nu = al.min(axis=1)
            b1 = -6.0 / (4 * t + 1)
            m = (R - b1) / max(1.0, abs(b1))
            neg = nu < 0
            if neg.any():
                an = np.abs(nu[neg])
                b2 = 2 * an * (np.log(an) + math.log1p(t) - 3)
                m[neg] = np.minimum(m[neg], (R[neg] - b2) / np.maximum(1.0, np.abs(b2)))
            yield from array_margins(m, s.t)

    return make_report("hamilton_ivey", margins(), tolerance, {"nu0": nu0})


def _centred_rate(values, times):
    """d/dt at interior samples by the three-point rule on a non-uniform grid."""
    out = []
    for i in range(1, len(times) - 1):
        h1, h2 = times[i] - times[i - 1], times[i + 1] - times[i]
        d = (-h2 / (h1 * (h1 + h2))) * values[i - 1] + ((h2 - h1) / (h1 * h2)) * values[i] \
            + (h1 / (h2 * (h1 + h2))) * values[i + 1]
        out.append(d)
    return out


def surface_harnack_check(traj, tolerance: float = 1e-4) -> CheckReport:
    """``dR/dt - |grad R|^2 / R + R / t >= 0`` on a surface flow with R(., 0) > 0.

    Only compact surfaces are checked.  ``t`` is measured from the first
    stored state; the first and last outputs only feed the differences.
    """
    states = _states(traj)
    if not all(isinstance(s, WarpedState) and s.n == 2 for s in states):
        raise UnsupportedReduction("surface Harnack needs a two-dimensional warped trajectory")
    if not states[0].profile.closed:
        raise UnsupportedReduction("only compact surfaces are checked")
    R = [s.scalar() for s in states]
    if R[0].min() <= 0:
        raise NonPositiveInitialR(f"min R(0) = {R[0].min():.6g}")
    t0 = states[0].t
    times = np.array([s.t - t0 for s in states])
    rates = _centred_rate(R, times)

    def margins():
        for i, Rt in enumerate(rates, start=1):
            s, r = states[i], R[i]
            m = Rt - s.grad_sq(r) / r + r / times[i]
            yield from array_margins(m / np.maximum(1.0, r / times[i]), s.t)

    return make_report("surface_harnack", margins(), tolerance)


def trace_harnack_check(traj, tolerance: float = 1e-9) -> CheckReport:
    """``t R(x, t)`` non-decreasing between consecutive outputs at every grid point."""
    states = _states(traj)

    def margins():
        for a, b in zip(states[:-1], states[1:]):
            lo, hi = a.t * _scalar(a), b.t * _scalar(b)
            yield from array_margins((hi - lo) / np.maximum(1.0, np.abs(lo)), b.t)

    return make_report("trace_harnack", margins(), tolerance)


_CONES = {
    "Ric>=0": (lambda al: 0.5 * np.array([al[1] + al[2], al[2] + al[0], al[0] + al[1]]).min(), False),
    "Ric>0": (lambda al: 0.5 * np.array([al[1] + al[2], al[2] + al[0], al[0] + al[1]]).min(), True),
    "Sec>=0": (lambda al: 0.5 * al.min(), False),
    "Sec>0": (lambda al: 0.5 * al.min(), True),
}


def invariant_cone_check(ode_traj, tolerance: float = 1e-12) -> CheckReport:
    """Every curvature cone that contains alpha(0) must contain every later alpha."""
    states = _states(ode_traj)
    if not all(isinstance(s, CurvODEState) for s in states):
        raise UnsupportedReduction("invariant cones are checked on CurvODE trajectories")
    a0 = states[0].alpha
    cones = [name for name, (fn, strict) in _CONES.items()
             if (fn(a0) > 0 if strict else fn(a0) >= -tolerance)]
    if not cones:
        return not_applicable("invariant_cone", "initial alpha lies in no cone")
    worst, loc, strict_fail = math.inf, (math.nan, -1), False
    for s in states:
        for name in cones:
            fn, strict = _CONES[name]
            v = float(fn(s.alpha))
            if strict and v <= 0:
                strict_fail = True
            if v < worst:
                worst, loc = v, (s.t, 0)
    passed = worst >= -tolerance and not strict_fail
    return CheckReport("invariant_cone", passed, worst, loc, len(states) * len(cones), tolerance,
                       True, {"cones": cones})


# ---------------------------------------------------------------------------
# heat equation estimates

Background = Union[WarpedState, FlatGrid]


@dataclass
class HeatRun:
    """Positive heat-equation samples ``u[j]`` at ``times[j]`` on a static background."""

    background: Background
    times: np.ndarray
    u: np.ndarray
    positivity_floor: float = POSITIVITY_FLOOR

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape[0] != self.times.size:
            raise ValueError("one sample per time is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must increase")
        if not np.all(self.u > self.positivity_floor):
            raise NonConvergence("heat solution fell below the positivity floor",
                                 {"min_u": float(self.u.min())})

    @property
    def n(self) -> int:
        return self.background.n


def heat_run(background: Background, u0, times: Sequence[float], dt_max: float = 1e-3) -> HeatRun:
    """Evolve ``u_t = Laplacian u`` from time 0 to each of ``times``.

    Warped backgrounds use Crank-Nicolson on the conservative discretization;
    the flat torus is propagated exactly in Fourier space.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("output times must be positive and increasing")
    u = np.asarray(u0, dtype=float).copy()
    out = []
    if isinstance(background, FlatGrid):
        if not background.periodic:
            raise UnsupportedReduction("heat_run on a flat window is not supported; build a HeatRun directly")
        uh = np.fft.fftn(u)
        k2 = background.symbol()
        for t in times:
            out.append(np.real(np.fft.ifftn(uh * np.exp(-k2 * t))))
        return HeatRun(background, times, np.array(out))
    s = background
    if s.profile.base == "periodic":
        raise UnsupportedReduction("periodic warped backgrounds: use the flat torus grid")
    diag, off, _ = s.stiffness()
    W = s.weights()
    t = 0.0
    for target in times:
        steps = max(1, math.ceil((target - t) / dt_max - 1e-9))
        dt = (target - t) / steps
        ab = np.zeros((3, W.size))
        ab[0, 1:] = 0.5 * dt * off
        ab[1] = W + 0.5 * dt * diag
        ab[2, :-1] = 0.5 * dt * off
        for _ in range(steps):
            Ku = diag * u
            Ku[:-1] += off * u[1:]
            Ku[1:] += off * u[:-1]
            u = solve_banded((1, 1), ab, W * u - 0.5 * dt * Ku)
        t = target
        out.append(u.copy())
    return HeatRun(s, times, np.array(out))


def _require_nonnegative_ricci(bg: Background, tol: float = 1e-10):
    if isinstance(bg, FlatGrid):
        return
    rr, rf = bg.ricci()
    m = float(min(rr.min(), rf.min()))
    if m < -tol:
        raise NegativeRicci(f"background Ricci lower bound {m:.6g} < 0")


def li_yau_check(hr: HeatRun, tolerance: float = 1e-6) -> CheckReport:
    """``|grad u|^2/u^2 - u_t/u <= n/2t`` at interior output times.

    Computed on ``log u``: space derivatives by the background's stencils,
    time derivative by centred differences of the stored samples.
    ``details['max_abs_margin']`` measures closeness to equality.
    """
    _require_nonnegative_ricci(hr.background)
    logu = np.log(hr.u)
    n = hr.n
    rates = _centred_rate(list(logu), hr.times)
    worst_abs = 0.0
    margins = []
    for j, lt in enumerate(rates, start=1):
        t = hr.times[j]
        lhs = hr.background.grad_sq(logu[j]) - lt
        m = n / (2 * t) - lhs
        worst_abs = max(worst_abs, float(np.max(np.abs(m))))
        margins.extend(array_margins(m, t))
    return make_report("li_yau", margins, tolerance, {"max_abs_margin": worst_abs})


def _point_distance(bg: Background, i: int, j: int) -> float:
    if isinstance(bg, FlatGrid):
        p = np.array(np.unravel_index(i, bg.shape)) - np.array(np.unravel_index(j, bg.shape))
        d = np.abs(p) * bg.h
        if bg.periodic:
            d = np.minimum(d, bg.extent - d)
        return float(np.sqrt(np.sum(d * d)))
    s = bg.arclength()
    d = abs(float(s[i] - s[j]))
    if bg.profile.base == "periodic":
        d = min(d, bg.total_length() - d)
    return d


def harnack_psi(bg: Background, i: int, j: int, t1: float, t2: float) -> float:
    """``d(xi_1, xi_2)^2 / (t2 - t1)``."""
    return _point_distance(bg, i, j) ** 2 / (t2 - t1)


def classical_harnack_check(hr: HeatRun, quadruples=None, count: int = 100, seed: int = 0,
                            tolerance: float = 1e-9) -> CheckReport:
    """``t1^{n/2} u(xi1, t1) <= exp(psi/4) t2^{n/2} u(xi2, t2)`` in log form.

    ``quadruples`` are ``(i1, j1, i2, j2)``: grid point and time index pairs
    with ``j1 < j2``; otherwise ``count`` are drawn with ``seed``.
    """
    bg = hr.background
    _require_nonnegative_ricci(bg)
    if isinstance(bg, WarpedState) and not bg.profile.closed:
        raise UnsupportedReduction("the classical Harnack check needs a compact background")
    n = hr.n
    U = hr.u.reshape(hr.times.size, -1)
    if quadruples is None:
        rng = np.random.default_rng(seed)
        quadruples = []
        while len(quadruples) < count:
            j1, j2 = sorted(rng.choice(hr.times.size, 2, replace=False))
            quadruples.append((int(rng.integers(U.shape[1])), int(j1), int(rng.integers(U.shape[1])), int(j2)))
    margins = []
    for k, (i1, j1, i2, j2) in enumerate(sorted(quadruples)):
        t1, t2 = hr.times[j1], hr.times[j2]
        if not t1 < t2:
            raise ValueError("each quadruple needs t1 < t2")
        psi = harnack_psi(bg, i1, i2, t1, t2)
        m = psi / 4 + 0.5 * n * math.log(t2) + math.log(U[j2, i2]) - 0.5 * n * math.log(t1) - math.log(U[j1, i1])
        margins.append((m, t2, i2))
    return make_report("classical_harnack", margins, tolerance, {"quadruples": len(quadruples)})


# ---------------------------------------------------------------------------
def two_resolution(build: Callable[[int], CheckReport], N: int) -> CheckReport:
    """Run a check at ``N`` and ``2N``; the derived tolerance is ``3 |m(N) - m(2N)|``.

    The combined report fails only if the violation persists at both
    resolutions.  The finer report is returned with both margins in ``details``.
    """
    coarse, fine = build(N), build(2 * N)
    if not (coarse.applicable and fine.applicable):
        return fine
    est = 3 * abs(coarse.worst_margin - fine.worst_margin) if math.isfinite(coarse.worst_margin) else 0.0
    tol = max(fine.tolerance, est)
    bad_c = coarse.worst_margin < -max(coarse.tolerance, est)
    bad_f = fine.worst_margin < -tol
    d = dict(fine.details)
    d.update({"margin_N": coarse.worst_margin, "margin_2N": fine.worst_margin, "N": N})
    return CheckReport(fine.name, not (bad_c and bad_f), fine.worst_margin, fine.worst_location,
                       coarse.samples_checked + fine.samples_checked, tol, True, d)
