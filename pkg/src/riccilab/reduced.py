"""Reduced geometry along a backward flow: L-length, L-geodesics, reduced
distance and volume, and volume-ratio (non-collapsing) measurements.

Everything lives on rotationally symmetric backgrounds with the base point
``p`` at the left pole (``x = 0``).  L-geodesics from a pole are then
meridional, so a path is a function ``x(s)`` of ``s = sqrt(tau)`` and each
boundary value problem has one unknown: the initial s-velocity.

Coordinates here are the gauge coordinates of the flow engine, which differ
from a solution of the unmodified flow by the diffeomorphisms generated by
the gauge field ``v``.  The true velocity of a path is therefore
``x_tau - v`` and a fixed point of the manifold drifts as ``x_tau = v``;
both corrections vanish identically on the round and flat backgrounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.special import roots_jacobi

from . import _kernels_py, kernels
from .errors import (ShootingDiverged, NonMinimizing, SlabOutOfRange, TauOutOfRange,
                     UnsupportedReduction)
from .flow import FlowTrajectory, distance_between
from .profile import Profile, WarpedState
from .reports import CheckReport, make_report

FIELDS = ("a", "a_tau", "R", "R_tau", "v", "v_tau", "ric")
_ODD = _kernels_py._ODD


def _pole_geometry(s: WarpedState):
    p = s.profile
    if p.base == "sphere":
        return 2, p.length
    if p.base == "plane":
        return 1, p.length
    raise UnsupportedReduction("reduced geometry needs a base point at a pole (sphere or plane base)")


def _check_pole(p):
    if p not in (None, 0, "pole", 0.0):
        raise UnsupportedReduction("the base point must be the pole x = 0")


# ---------------------------------------------------------------------------
class BackwardTrajectory:
    """A flow trajectory read backward from ``t0``: ``tau = t0 - t``.

    Profiles, curvature and gauge field are interpolated between stored
    states by monotone cubic (PCHIP) interpolation in time; their tau
    derivatives are the derivatives of those interpolants, i.e. differences
    of stored states rather than evolution formulas.  A single stored state
    is treated as a static background valid for all ``0 <= tau <= tau_max``.
    """

    def __init__(self, base: FlowTrajectory, t0: Optional[float] = None,
                 tau_max: Optional[float] = None):
        states = sorted(base.states, key=lambda s: s.t)
        if not states or not all(isinstance(s, WarpedState) for s in states):
            raise UnsupportedReduction("backward trajectories need rotationally symmetric states")
        prof = states[0].profile
        if any(s.profile is not prof and s.profile != prof for s in states):
            raise UnsupportedReduction("all states must share one profile")
        self.poles, self.xmax = _pole_geometry(states[0])
        self.base = base
        self.states = states
        self.profile = prof
        ts = np.array([s.t for s in states])
        if np.any(np.diff(ts) <= 0):
            raise ValueError("stored times must be strictly increasing")
        self.t0 = float(ts[-1] if t0 is None else t0)
        self.static = len(states) == 1
        if self.static:
            self.tau_max = math.inf if tau_max is None else float(tau_max)
            self.tau_min = 0.0
        else:
            if not ts[0] - 1e-12 <= self.t0 <= ts[-1] + 1e-12:
                raise TauOutOfRange("t0 outside the stored time range")
            self.tau_max = float(self.t0 - ts[0]) if tau_max is None else min(float(tau_max), self.t0 - ts[0])
        rows = []
        for s in states:
            krad, ktan, v, _ = s.fields()
            k = prof.k
            R = 2 * k * krad + k * (k - 1) * ktan
            rows.append((s.a, R, v, k * krad, s.lam))
        self._a = np.array([r[0] for r in rows])
        self._R = np.array([r[1] for r in rows])
        self._v = np.array([r[2] for r in rows])
        self._ric = np.array([r[3] for r in rows])
        self._lam = np.array([r[4] for r in rows])
        if not self.static:
            self._interp = {name: PchipInterpolator(ts, arr, axis=0)
                            for name, arr in (("a", self._a), ("R", self._R), ("v", self._v),
                                              ("ric", self._ric), ("lam", self._lam))}
            self._deriv = {name: self._interp[name].derivative() for name in ("a", "R", "v")}

    @classmethod
    def from_state(cls, s: WarpedState, tau_max: float = math.inf) -> "BackwardTrajectory":
        tr = FlowTrajectory()
        tr.append(s)
        return cls(tr, s.t, tau_max)

    @property
    def n(self) -> int:
        return self.profile.n

    def _check_tau(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau < -1e-14) or np.any(tau > self.tau_max * (1 + 1e-12) + 1e-14):
            raise TauOutOfRange(f"tau must lie in [0, {self.tau_max}]")
        return np.clip(tau, 0.0, None)

    def rows(self, tau) -> np.ndarray:
        """Field table of shape ``len(tau) x 7 x N`` (order as in ``FIELDS``)."""
        tau = np.atleast_1d(self._check_tau(tau))
        N = self.profile.N
        out = np.empty((tau.size, len(FIELDS), N))
        if self.static:
            out[:, 0] = self._a[0]
            out[:, 2] = self._R[0]
            out[:, 4] = self._v[0]
            out[:, 6] = self._ric[0]
            out[:, 1] = out[:, 3] = out[:, 5] = 0.0
            return out
        t = self.t0 - tau
        out[:, 0] = self._interp["a"](t)
        out[:, 1] = -self._deriv["a"](t)
        out[:, 2] = self._interp["R"](t)
        out[:, 3] = -self._deriv["R"](t)
        out[:, 4] = self._interp["v"](t)
        out[:, 5] = -self._deriv["v"](t)
        out[:, 6] = self._interp["ric"](t)
        return out

    def state_at(self, tau: float) -> WarpedState:
        tau = float(self._check_tau(tau))
        if self.static:
            return self.states[0].with_a(self.states[0].a, t=self.t0 - tau)
        t = self.t0 - tau
        return self.states[0].with_a(self._interp["a"](t), t=t, lam=float(self._interp["lam"](t)))

    def table(self, tau_bar: float, M: int):
        """Rows at the RK4 stage points of ``M`` uniform steps in s on ``[0, sqrt(tau_bar)]``."""
        sb = math.sqrt(tau_bar)
        s = np.linspace(0.0, sb, 2 * M + 1)
        return np.ascontiguousarray(self.rows(s * s)), sb / M

    def sample(self, x, tau):
        """Values and x-derivatives of every field at points ``(x_i, tau_i)``."""
        x = np.asarray(x, dtype=float)
        rows = self.rows(tau)
        prof = self.profile
        xf, flip = _kernels_py._locate(x, prof.dx, prof.N, self.poles)
        out = {}
        idx = np.arange(x.size)
        for f, name in enumerate(FIELDS):
            val, der = _interp_rows(rows[:, f], idx, xf, prof.dx, prof.N, _ODD[f], self.poles)
            if _ODD[f]:
                out[name], out[name + "_x"] = flip * val, der
            else:
                out[name], out[name + "_x"] = val, flip * der
        return out


def _interp_rows(rows, idx, x, dx, N, odd, poles):
    # Catmull-Rom like _kernels_py._interp, but each point reads its own row
    xi = x / dx - 0.5
    i = np.floor(xi).astype(int)
    t = xi - i
    sign = -1.0 if odd else 1.0
    vals = []
    for off in (-1, 0, 1, 2):
        j = i + off
        sg = np.ones_like(t)
        low = j < 0
        j = np.where(low, -1 - j, j)
        sg = np.where(low, sign, sg)
        high = j > N - 1
        if poles == 2:
            sg = np.where(high, sg * sign, sg)
        j = np.clip(np.where(high, 2 * N - 1 - j, j), 0, N - 1)
        vals.append(sg * rows[idx, j])
    p0, p1, p2, p3 = vals
    c1 = 0.5 * (p2 - p0)
    c2 = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3
    c3 = 0.5 * (p3 - p0) + 1.5 * (p1 - p2)
    return p1 + t * (c1 + t * (c2 + t * c3)), (c1 + t * (2.0 * c2 + 3.0 * t * c3)) / dx


def shrinking_sphere_trajectory(n: int, N: int, t_start: float, t_end: float,
                                samples: int = 401, r0: float = 1.0) -> FlowTrajectory:
    """Exact round shrinker ``r(t)^2 = r0^2 - 2(n-1)t`` sampled at ``samples`` times."""
    prof = Profile("sphere", n - 1, N)
    if r0 * r0 - 2 * (n - 1) * t_end <= 0:
        raise ValueError("t_end is past extinction")
    tr = FlowTrajectory()
    for t in np.linspace(t_start, t_end, samples):
        tr.append(WarpedState.make(prof, 0.5 * math.log(r0 * r0 - 2 * (n - 1) * t), t=float(t)))
    return tr


# ---------------------------------------------------------------------------
@dataclass
class LPath:
    """A meridional space-time path ``x(s)``, ``s = sqrt(tau)``, starting at ``s[0]``.

    ``L`` and ``K`` are filled in when the path comes from the geodesic
    solver (integrated along with it); ``y`` is then the exact s-velocity.
    """

    s: np.ndarray
    x: np.ndarray
    y: Optional[np.ndarray] = None
    L: Optional[float] = None
    K: Optional[float] = None
    converged: bool = True
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.s.shape != self.x.shape or self.s.size < 3:
            raise ValueError("need matching node arrays with at least 3 nodes")
        if np.any(np.diff(self.s) <= 0):
            raise ValueError("s must be strictly increasing")

    @property
    def tau(self) -> np.ndarray:
        return self.s ** 2

    @property
    def tau_bar(self) -> float:
        return float(self.s[-1] ** 2)

    def velocity(self) -> np.ndarray:
        """dx/ds at the nodes."""
        if self.y is not None:
            return self.y
        return CubicSpline(self.s, self.x)(self.s, 1)

    def at_tau(self, tau):
        """(x, dx/ds) at arbitrary tau by cubic interpolation in s."""
        sp = CubicSpline(self.s, self.x)
        s = np.sqrt(tau)
        return sp(s), sp(s, 1)


def _lagrangian(bt: BackwardTrajectory, s, x, xs):
    q = bt.sample(x, s * s)
    w = xs - 2.0 * s * q["v"]
    return 2.0 * s * s * q["R"] + 0.5 * np.exp(2.0 * q["a"]) * w * w


def l_length(path: LPath, bt: BackwardTrajectory, form: str = "s", nodes: int = 400) -> float:
    """L-length of a meridional path.

    ``form='s'``: Simpson quadrature of ``2 s^2 R + |dgamma/ds|^2 / 2`` on the path
    nodes.  ``form='tau'``: ``int sqrt(tau) (R + |gamma'|^2) dtau`` by Gauss-Jacobi
    rules that absorb the endpoint powers of tau (an independent check).
    """
    if path.s[0] < 0 or path.s[-1] ** 2 > bt.tau_max * (1 + 1e-12):
        raise TauOutOfRange("path leaves the backward trajectory")
    if form == "s":
        return float(simpson(_lagrangian(bt, path.s, path.x, path.velocity()), x=path.s))
    if form != "tau":
        raise ValueError("form must be 's' or 'tau'")
    t1, t2 = float(path.s[0] ** 2), path.tau_bar
    half = 0.5 * (t2 - t1)
    if t1 > 0:
        # away from tau = 0 both pieces are smooth
        xi, wts = np.polynomial.legendre.leggauss(nodes)
        tau = t1 + half * (1 + xi)
        x, xs = path.at_tau(tau)
        s = np.sqrt(tau)
        q = bt.sample(x, tau)
        w = xs / (2 * s) - q["v"]
        f = s * (q["R"] + np.exp(2 * q["a"]) * w * w)
        return float(half * np.dot(wts, f))
    xi, wts = roots_jacobi(nodes, 0.0, 0.5)
    tau = half * (1 + xi)
    x, _ = path.at_tau(tau)
    part_R = half ** 1.5 * np.dot(wts, bt.sample(x, tau)["R"])
    xi, wts = roots_jacobi(nodes, 0.0, -0.5)
    tau = half * (1 + xi)
    x, xs = path.at_tau(tau)
    s = np.sqrt(tau)
    q = bt.sample(x, tau)
    g = np.exp(2 * q["a"]) * (0.5 * xs - s * q["v"]) ** 2  # tau |gamma'|^2
    part_v = half ** 0.5 * np.dot(wts, g)
    return float(part_R + part_v)


def l_length_many(bt: BackwardTrajectory, s: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """L-lengths of many paths sharing the node vector ``s`` (rows of ``xs``)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    m, K = xs.shape
    rows = bt.rows(s * s)
    prof = bt.profile
    vel = np.gradient(xs, s, axis=1, edge_order=2)
    S = np.broadcast_to(s, xs.shape).ravel()
    X = xs.ravel()
    xf, flip = _kernels_py._locate(X, prof.dx, prof.N, bt.poles)
    idx = np.tile(np.arange(K), m)
    a, _ = _interp_rows(rows[:, 0], idx, xf, prof.dx, prof.N, False, bt.poles)
    R, _ = _interp_rows(rows[:, 2], idx, xf, prof.dx, prof.N, False, bt.poles)
    v, _ = _interp_rows(rows[:, 4], idx, xf, prof.dx, prof.N, True, bt.poles)
    w = vel.ravel() - 2 * S * flip * v
    lag = (2 * S * S * R + 0.5 * np.exp(2 * a) * w * w).reshape(m, K)
    return simpson(lag, x=s, axis=1)


# ---------------------------------------------------------------------------
class _Shooter:
    """Vectorized secant shooting for targets ``x(s_bar) = x_q``."""

    def __init__(self, bt: BackwardTrajectory, tau_bar: float, M: int, backend=None):
        if not tau_bar > 0:
            raise TauOutOfRange("tau_bar must be positive")
        bt._check_tau(tau_bar)
        self.bt = bt
        self.tau_bar = float(tau_bar)
        self.sb = math.sqrt(tau_bar)
        self.M = M
        self.table, self.hs = bt.table(tau_bar, M)
        self._many = kernels.get("shoot_many", backend)
        self._path = kernels.get("shoot_path", backend)
        self.dx = bt.profile.dx

    def run(self, y0):
        return self._many(self.table, self.hs, self.M, self.dx, self.bt.poles, self.bt.xmax,
                          np.ascontiguousarray(y0, dtype=float))

    def path(self, y0) -> np.ndarray:
        return self._path(self.table, self.hs, self.M, self.dx, self.bt.poles, self.bt.xmax, float(y0))

    def solve(self, xq, y_guess=None, tol=1e-11, maxit=60):
        xq = np.asarray(xq, dtype=float)
        y_b = xq / self.sb if y_guess is None else np.asarray(y_guess, dtype=float).copy()
        y_a = y_b * 1.02 + 1e-3
        fa = self.run(y_a)[0] - xq
        res = self.run(y_b)
        fb = res[0] - xq
        out = [np.array(r, dtype=float) for r in res[:4]] + [np.array(res[4], dtype=bool)]
        its = np.zeros(xq.size, dtype=int)
        scale = np.maximum(1.0, np.abs(xq))
        for _ in range(maxit):
            act = np.abs(fb) > tol * scale
            if not act.any():
                break
            d = fb[act] - fa[act]
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(d != 0, fb[act] * (y_b[act] - y_a[act]) / d, 0.0)
            cap = 0.5 * (np.abs(y_b[act]) + 1.0)
            step = np.clip(np.nan_to_num(step), -cap, cap)
            y_a[act], fa[act] = y_b[act], fb[act]
            y_b[act] = y_b[act] - step
            r = self.run(y_b[act])
            fb[act] = r[0] - xq[act]
            for j in range(4):
                out[j][act] = r[j]
            out[4][act] = r[4]
            its[act] += 1
        ok = out[4] & (np.abs(fb) <= tol * scale * 10) & np.isfinite(fb)
        return y_b, out[0], out[1], out[2], out[3], ok, np.abs(fb), its

    def bisect(self, xq: float, y_hint: float, tol=1e-11):
        """Bracketing fallback for a single stubborn target."""
        f = lambda y: float(self.run(np.array([y]))[0][0]) - xq
        lo, hi = 0.0, max(abs(y_hint), xq / self.sb, 1e-6)
        flo, fhi = f(lo), f(hi)
        grow = 0
        while flo * fhi > 0 and grow < 40:
            hi *= 1.5
            fhi = f(hi)
            grow += 1
        if flo * fhi > 0:
            return None
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if abs(fm) <= tol * max(1.0, xq):
                return mid
            if flo * fm <= 0:
                hi, fhi = mid, fm
            else:
                lo, flo = mid, fm
        return 0.5 * (lo + hi)


def _target_x(bt: BackwardTrajectory, q) -> float:
    if isinstance(q, (int, np.integer)):
        return float(bt.profile.x[q])
    return float(q)


def l_geodesic(bt: BackwardTrajectory, p, q, tau_bar: float, M: int = 256,
               verify: bool = True, n_compare: int = 24, tol: float = 1e-8,
               seed: int = 0, backend: Optional[str] = None) -> LPath:
    """Minimizing meridional L-geodesic from the pole to ``q`` (index or coordinate) at ``tau_bar``.

    The returned path carries ``L`` and ``K`` integrated along it and
    ``residual = |x(s_bar) - x_q|``.  With ``verify`` the path is compared
    against ``n_compare`` randomly perturbed paths (amplitude <= 0.05).
    """
    _check_pole(p)
    sh = _Shooter(bt, tau_bar, M, backend)
    xq = _target_x(bt, q)
    if bt.poles == 1 and not 0 <= xq <= bt.xmax:
        raise ShootingDiverged("target outside the profile")
    y0, xe, ye, L, K, ok, res, its = sh.solve(np.array([xq]))
    y = float(y0[0])
    if not ok[0]:
        alt = sh.bisect(xq, y)
        if alt is None:
            raise ShootingDiverged(f"no shooting parameter reaches x = {xq} at tau = {tau_bar}")
        y = alt
    rec = sh.path(y)
    if not np.all(np.isfinite(rec)):
        raise ShootingDiverged("geodesic integration left the profile")
    s = np.linspace(0.0, sh.sb, M + 1)
    path = LPath(s, rec[:, 0], rec[:, 1], float(rec[-1, 2]), float(rec[-1, 3]),
                 True, abs(float(rec[-1, 0]) - xq), int(its[0]))
    if path.residual > 1e-6:
        raise ShootingDiverged(f"shooting residual {path.residual:.3g}")
    if verify:
        base = l_length_many(bt, s, path.x[None, :])[0]
        rng = np.random.default_rng(seed)
        pert = _perturbations(rng, s, n_compare, 0.05)
        others = l_length_many(bt, s, path.x[None, :] + pert)
        if others.min() < base - tol:
            raise NonMinimizing(f"a comparison path is shorter by {base - others.min():.3g}")
    return path


def _perturbations(rng, s, count, amp):
    """Random C^0 perturbations vanishing at both ends: polygonal bumps on random knots."""
    sb = s[-1]
    out = np.empty((count, s.size))
    for i in range(count):
        knots = np.sort(rng.uniform(0, sb, rng.integers(1, 6)))
        vals = rng.uniform(-amp, amp, knots.size)
        out[i] = np.interp(s, np.concatenate([[0.0], knots, [sb]]), np.concatenate([[0.0], vals, [0.0]]))
    return out


# ---------------------------------------------------------------------------
@dataclass
class LField:
    """L and the reduced distance on the cell centres at one tau_bar."""

    tau_bar: float
    x: np.ndarray
    L: np.ndarray
    K: np.ndarray
    y0: np.ndarray
    y_end: np.ndarray
    ok: np.ndarray
    residual: np.ndarray

    @property
    def l(self) -> np.ndarray:
        return self.L / (2.0 * math.sqrt(self.tau_bar))

    @property
    def failed(self) -> np.ndarray:
        return ~self.ok


def reduced_distance_field(bt: BackwardTrajectory, p, tau_bar: float, M: int = 256,
                           backend: Optional[str] = None) -> LField:
    """L(q, tau_bar) and l for every cell centre.

    All targets are shot together from the flat guess ``x_q / s_bar``; those
    that fail are retried warm-started from the nearest converged neighbour
    and then by bracketing.  Points that still fail keep ``ok = False`` and
    NaN values.
    """
    _check_pole(p)
    sh = _Shooter(bt, tau_bar, M, backend)
    xq = bt.profile.x.copy()
    y0, xe, ye, L, K, ok, res, _ = sh.solve(xq)
    if not ok.all():
        for i in np.nonzero(~ok)[0]:
            good = np.nonzero(ok)[0]
            if good.size:
                j = good[np.argmin(np.abs(good - i))]
                guess = y0[j] * xq[i] / xq[j]
                r = sh.solve(xq[i:i + 1], np.array([guess]))
                if r[5][0]:
                    y0[i], xe[i], ye[i], L[i], K[i], ok[i], res[i] = (r[0][0], r[1][0], r[2][0], r[3][0],
                                                                     r[4][0], True, r[6][0])
                    continue
            alt = sh.bisect(xq[i], y0[i])
            if alt is not None:
                r = sh.run(np.array([alt]))
                if r[4][0] and abs(r[0][0] - xq[i]) < 1e-8:
                    y0[i], xe[i], ye[i], L[i], K[i], ok[i], res[i] = (alt, r[0][0], r[1][0], r[2][0],
                                                                     r[3][0], True, abs(r[0][0] - xq[i]))
    L = np.where(ok, L, np.nan)
    K = np.where(ok, K, np.nan)
    return LField(float(tau_bar), xq, L, K, y0, ye, ok, res)


# ---------------------------------------------------------------------------
@dataclass
class LReport:
    """Values at the evaluation point and worst identity residuals over the interior cells."""

    tau_bar: float
    index: int
    L: float
    l: float
    K: float
    grad_check: float
    residual_a: float
    residual_b: float
    laplacian_margin: float
    interior: tuple
    details: dict = field(default_factory=dict)


def identities_check(bt: BackwardTrajectory, p, tau_bar: float, q: Optional[int] = None,
                     M: int = 256, interior: Sequence[float] = (0.05, 0.85),
                     rel_delta: float = 2e-3, backend: Optional[str] = None) -> LReport:
    """Gradient, tau-derivative and Laplacian identities of L on the grid.

    ``interior`` is the fraction of the profile length (from the pole)
    over which residuals are collected; it keeps the far pole, where
    meridians from ``p`` focus, and walls out of the differencing stencils.
    The tau-derivative uses a fourth-order difference of L-fields at
    ``tau_bar (1 +- delta), (1 +- 2 delta)``.
    """
    fld = reduced_distance_field(bt, p, tau_bar, M, backend)
    st = bt.state_at(tau_bar)
    prof = bt.profile
    sb = math.sqrt(tau_bar)
    n = prof.n
    x = prof.x
    lo, hi = interior
    cells = np.nonzero((x >= lo * prof.length) & (x <= hi * prof.length))[0]
    cells = cells[(cells >= 1) & (cells <= prof.N - 2)]
    if q is None:
        q = int(cells[len(cells) // 4]) if cells.size else 0

    rows = bt.rows(np.array([tau_bar]))[0]
    a, R, v = rows[0], rows[2], rows[4]
    psi2 = np.exp(2 * a)
    w = fld.y_end - 2 * sb * v
    gradL_geo = psi2 * w                       # covector component dL/dx
    gradL_fd = np.gradient(fld.L, prof.dx)
    grad_err = np.abs(gradL_fd - gradL_geo) / np.sqrt(psi2)
    gsq = psi2 * w * w                          # |grad L|^2

    rhs_a = -4 * tau_bar * R + (2 / sb) * fld.L - (4 / sb) * fld.K
    res_a = np.abs(gsq - rhs_a)

    d = rel_delta * tau_bar
    if tau_bar + 2 * d > bt.tau_max:
        d = (bt.tau_max - tau_bar) / 2
        if d <= 0:
            raise TauOutOfRange("tau_bar too close to the end of the backward trajectory")
    Ls = {m: reduced_distance_field(bt, p, tau_bar + m * d, M, backend).L for m in (-2, -1, 1, 2)}
    dL = (-Ls[2] + 8 * Ls[1] - 8 * Ls[-1] + Ls[-2]) / (12 * d)
    rhs_b = 2 * sb * R - fld.L / (2 * tau_bar) + fld.K / tau_bar
    res_b = np.abs(dL - rhs_b)

    lap = st.laplacian(np.nan_to_num(fld.L))
    margin = n / sb - 2 * sb * R - fld.K / tau_bar - lap

    pick = lambda arr: arr[cells] if cells.size else np.array([np.nan])
    worst = lambda arr: float(np.nanmax(pick(arr)))
    return LReport(
        tau_bar=float(tau_bar), index=int(q), L=float(fld.L[q]), l=float(fld.l[q]), K=float(fld.K[q]),
        grad_check=worst(grad_err), residual_a=worst(res_a), residual_b=worst(res_b),
        laplacian_margin=float(np.nanmin(pick(margin))), interior=(int(cells.min()), int(cells.max())) if cells.size else (0, 0),
        details={"failed_points": int(np.sum(~fld.ok)), "K_exponent": 1.5},
    )


# ---------------------------------------------------------------------------
@dataclass
class ReducedVolume:
    taus: np.ndarray
    values: np.ndarray
    min_l: np.ndarray
    valid: np.ndarray
    failed_fraction: np.ndarray
    monotone: bool
    fields: List[LField] = field(default_factory=list, repr=False)

    def rows(self):
        for i in range(len(self.taus)):
            yield (float(self.taus[i]), float(self.values[i]), float(self.min_l[i]), bool(self.valid[i]))


def reduced_volume(bt: BackwardTrajectory, p, tau_list, M: int = 256, slack: float = 1e-4,
                   backend: Optional[str] = None) -> ReducedVolume:
    """``int tau^{-n/2} exp(-l) dV_tau`` for each tau (no (4 pi)^{-n/2} factor).

    Failed shooting targets are dropped when they carry less than 1% of the
    volume; otherwise that tau is marked invalid (value NaN).  ``monotone``
    asks for a non-increasing sequence over the valid entries, with
    ``slack`` relative to the largest value.
    """
    taus = np.asarray(sorted(float(t) for t in tau_list))
    n = bt.n
    vals, mins, valid, frac, fields = [], [], [], [], []
    for tau in taus:
        fld = reduced_distance_field(bt, p, tau, M, backend)
        w = bt.state_at(tau).weights()
        bad = float(w[~fld.ok].sum() / w.sum())
        ok = bad < 0.01
        integrand = np.where(fld.ok, tau ** (-n / 2) * np.exp(-np.nan_to_num(fld.l, nan=np.inf)), 0.0)
        vals.append(float(np.dot(w, integrand)) if ok else math.nan)
        mins.append(float(np.nanmin(fld.l)) if fld.ok.any() else math.nan)
        valid.append(ok)
        frac.append(bad)
        fields.append(fld)
    vals = np.array(vals)
    good = vals[np.array(valid)]
    tol = slack * (np.max(np.abs(good)) if good.size else 1.0)
    monotone = bool(np.all(np.diff(good) <= tol))
    return ReducedVolume(taus, vals, np.array(mins), np.array(valid), np.array(frac), monotone, fields)


# ---------------------------------------------------------------------------
@dataclass
class CollapseReport:
    r: float
    admissible: bool
    ratio: float
    kappa_flag: Optional[bool]
    max_rm: float
    kappa: float


def ball_volume(s: WarpedState, r: float) -> float:
    """Volume of the geodesic ball of radius ``r`` about the left pole."""
    _pole_geometry(s)
    prof = s.profile
    S = s.node_arclength()
    if not 0 < r <= S[-1]:
        raise ValueError("radius must be positive and at most the meridian length")
    w = s.weights()
    cum = np.concatenate([[0.0], np.cumsum(w)])
    j = int(np.searchsorted(S, r, side="right") - 1)
    j = min(j, prof.N - 1)
    if S[j] >= r:
        return float(cum[j])
    lo = prof.faces[j]
    psi = math.exp(s.a[j])
    x_end = min(lo + (r - S[j]) / psi, prof.faces[j + 1])
    g, gw = np.polynomial.legendre.leggauss(8)
    xs = lo + 0.5 * (x_end - lo) * (g + 1)
    hk = prof._h(xs) ** prof.k
    part = 0.5 * (x_end - lo) * float(np.dot(gw, hk))
    return float(cum[j] + prof.omega * math.exp(s.a[j] + prof.k * s.b[j]) * part)


def kappa_report(source, x0, r_list, kappa: float, t0: Optional[float] = None) -> List[CollapseReport]:
    """Volume ratios ``r^{-n} Vol(B(x0, r))`` with admissibility over the slab ``[t0 - r^2, t0]``.

    ``source`` is a single state (treated as static) or a trajectory; only
    balls centred at the left pole are supported.
    """
    _check_pole(x0)
    if isinstance(source, FlowTrajectory):
        states = sorted(source.states, key=lambda s: s.t)
        static = False
    else:
        states = [source]
        static = True
    t0 = states[-1].t if t0 is None else float(t0)
    current = min(states, key=lambda s: abs(s.t - t0))
    if not static and abs(current.t - t0) > 1e-9 * max(1.0, abs(t0)):
        raise SlabOutOfRange("t0 is not a stored time")
    n = current.n
    out = []
    for r in r_list:
        r = float(r)
        if r <= 0:
            raise ValueError("radii must be positive")
        if static:
            slab = states
        else:
            if states[0].t > t0 - r * r + 1e-12:
                raise SlabOutOfRange(f"trajectory starts at {states[0].t}, slab needs {t0 - r * r}")
            slab = [s for s in states if t0 - r * r - 1e-12 <= s.t <= t0 + 1e-12]
        max_rm = 0.0
        for s in slab:
            inside = s.arclength() < r
            inside[0] = True
            krad, ktan = s.curvatures()
            rm = np.abs(krad[inside])
            if s.profile.k >= 2:
                rm = np.maximum(rm, np.abs(ktan[inside]))
            max_rm = max(max_rm, float(rm.max()))
        adm = max_rm <= r ** -2 * (1 + 1e-12)
        ratio = ball_volume(current, r) / r ** n
        out.append(CollapseReport(r, adm, ratio, (ratio >= kappa) if adm else None, max_rm, kappa))
    return out


def distance_derivative_check(traj: FlowTrajectory, x0: int, x1: int, kappa_bound: Optional[float] = None,
                              tolerance: float = 1e-6) -> CheckReport:
    """Forward difference quotients of ``d_t(x0, x1)`` against ``-4(n-1) sqrt(2 kappa / 3)``.

    ``x0``, ``x1`` are grid nodes.  Without ``kappa_bound`` the Ricci upper
    bound is measured at both ends of each interval and the larger is used,
    since the bound has to hold across the interval (negative values count
    as zero).
    """
    states = sorted(traj.states, key=lambda s: s.t)
    margins = []
    worst_kappa = 0.0
    for s0, s1 in zip(states[:-1], states[1:]):
        n = s0.n
        dt = s1.t - s0.t
        if dt <= 0:
            continue
        quot = (distance_between(s1, x0, x1) - distance_between(s0, x0, x1)) / dt
        if kappa_bound is None:
            kap = max(0.0, max(float(np.max(np.concatenate(s.ricci()))) for s in (s0, s1)) / (n - 1))
        else:
            kap = float(kappa_bound)
        worst_kappa = max(worst_kappa, kap)
        bound = -4 * (n - 1) * math.sqrt(2 * kap / 3)
        margins.append((quot - bound, s0.t, x0))
    return make_report("distance_derivative", margins, tolerance, {"max_kappa": worst_kappa})
