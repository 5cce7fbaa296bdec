"""Perelman's F and W functionals, lambda, mu, spectra and the conjugate heat flow.

Everything is evaluated on two kinds of static geometry:

* :class:`~riccilab.profile.WarpedState` (rotationally symmetric, functions of
  the radial coordinate only);
* :class:`~riccilab.flat.FlatGrid` (flat window or torus, arbitrary functions).

On profile states the gradient terms are evaluated through ``u = exp(-f/2)``
and the face-based Dirichlet form, ``int |grad f|^2 e^{-f} = 4 int |grad u|^2``,
which keeps the discrete functionals exactly scale covariant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.optimize as sopt
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (CflViolation, EigenSolveFailure, GridMismatch, NonConvergence,
                     NonPositiveTau, NotCompatible, UnsupportedReduction)
from .flat import FlatGrid
from .profile import Gauge, WarpedState
from .reports import CheckReport, make_report

Geometry = Union[WarpedState, FlatGrid]
ROLES = ("Potential_f", "HeatSolution_u", "TestFunction_phi")


@dataclass(frozen=True)
class ScalarField:
    values: np.ndarray
    role: str = "Potential_f"
    tau: Optional[float] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class EntropyRecord:
    t: float
    F: float
    W: float
    tau: float
    lam: float
    mu: Optional[float]
    volume: float
    mass: float


@dataclass(frozen=True)
class SpectrumRecord:
    eigenvalues: np.ndarray
    operator_lambda: float
    lichnerowicz_bound: Optional[float] = None
    lichnerowicz_ok: Optional[bool] = None


@dataclass(frozen=True)
class ProfileVariation:
    """Diagonal metric variation ``v = V_s ds^2 + V_f phi^2 g_S`` plus ``h = delta f``, ``sigma = delta tau``."""

    V_s: np.ndarray
    V_f: np.ndarray
    h: np.ndarray
    sigma: float = 0.0

    def trace(self, k: int) -> np.ndarray:
        return self.V_s + k * self.V_f


# ---------------------------------------------------------------------------
# basic pieces

def _values(s: Geometry, f) -> np.ndarray:
    v = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
    if isinstance(s, FlatGrid):
        return s.check(v)
    if not isinstance(s, WarpedState):
        raise UnsupportedReduction(f"entropy functionals need a profile or flat state, got {type(s).__name__}")
    if v.shape != (s.profile.N,):
        raise GridMismatch(f"state has {s.profile.N} cells, field has shape {v.shape}")
    return v


def _parts(s: Geometry, f):
    """(F, int e^{-f}, int f e^{-f}) by quadrature."""
    f = _values(s, f)
    if isinstance(s, FlatGrid):
        e = np.exp(-f)
        w = s.weights()
        return (float(np.sum(w * (s.scalar() + s.grad_sq(f)) * e)),
                float(np.sum(w * e)), float(np.sum(w * f * e)))
    u = np.exp(-0.5 * f)
    w = s.weights()
    u2 = u * u
    F = float(np.dot(w, s.scalar() * u2)) + 4.0 * s.dirichlet_energy(u)
    return F, float(np.dot(w, u2)), float(np.dot(w, f * u2))


def mass(s: Geometry, f, tau: Optional[float] = None) -> float:
    """``int e^{-f} dV``, times ``(4 pi tau)^{-n/2}`` when ``tau`` is given."""
    m = _parts(s, f)[1]
    if tau is None:
        return m
    return m * (4 * math.pi * tau) ** (-0.5 * s.n)


def normalize_potential(s: Geometry, f, tau: Optional[float] = None) -> np.ndarray:
    """Shift ``f`` by a constant so its mass is one."""
    f = _values(s, f)
    return f + math.log(mass(s, f, tau))


def f_eval(s: Geometry, f) -> float:
    return _parts(s, f)[0]


def w_eval(s: Geometry, f, tau: float, check: bool = True, tol: float = 1e-4) -> float:
    if not tau > 0:
        raise NonPositiveTau(f"tau must be positive, got {tau}")
    F, m, fm = _parts(s, f)
    c = (4 * math.pi * tau) ** (-0.5 * s.n)
    if check and abs(c * m - 1.0) > tol:
        raise NotCompatible(f"(4 pi tau)^(-n/2) int e^(-f) dV = {c * m:.8g}, not 1", c * m)
    return c * (tau * F + fm - s.n * m)


# ---------------------------------------------------------------------------
# operators

def _require_closed(s: Geometry):
    if isinstance(s, FlatGrid):
        if not s.periodic:
            raise UnsupportedReduction("eigenvalue problems need a closed state (flat torus)")
        return
    if not isinstance(s, WarpedState):
        raise UnsupportedReduction("eigenvalue problems need a profile or flat state")
    if not s.profile.closed:
        raise UnsupportedReduction("eigenvalue problems need a closed state")


def stiffness_matrix(s: WarpedState) -> sp.csr_matrix:
    """Sparse matrix of the Dirichlet form: ``u^T K u = int |grad u|^2``."""
    diag, off, corner = s.stiffness()
    N = s.profile.N
    K = sp.diags([off, diag, off], [-1, 0, 1], shape=(N, N), format="lil")
    if corner:
        K[0, N - 1] += corner
        K[N - 1, 0] += corner
    return K.tocsr()


def _fibre_harmonics(k: int, count: int):
    """(eigenvalue on the unit fibre, multiplicity) for the first ``count`` fibre modes."""
    if k == 0:
        return [(0.0, 1)]
    if k == 1:
        return [(float(m * m), 1 if m == 0 else 2) for m in range(count)]
    return [(float(l * (l + 1)), 2 * l + 1) for l in range(count)]


def _sector(s: WarpedState, scale: float, potential: np.ndarray, count: int, vectors: bool = False):
    """Lowest eigenpairs of ``scale * K + W diag(potential)`` against ``W``."""
    diag, off, corner = s.stiffness()
    w = s.weights()
    d = (scale * diag + w * potential) / w
    e = scale * off / np.sqrt(w[:-1] * w[1:])
    N = w.size
    count = min(count, N)
    try:
        if corner:
            A = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
            A[0, -1] = A[-1, 0] = scale * corner / math.sqrt(w[0] * w[-1])
            vals, vecs = sla.eigh(A, subset_by_index=(0, count - 1))
        else:
            vals, vecs = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(vals)):
        raise EigenSolveFailure("non-finite eigenvalues")
    if not vectors:
        return vals
    return vals, vecs / np.sqrt(w)[:, None]


def lambda_pair(s: Geometry):
    """Smallest eigenvalue of ``-4 Delta + R`` and its L^2-normalized eigenfunction."""
    _require_closed(s)
    if isinstance(s, FlatGrid):
        return 0.0, np.full(s.shape, 1.0 / math.sqrt(s.volume()))
    vals, vecs = _sector(s, 4.0, s.scalar(), 1, vectors=True)
    u = vecs[:, 0]
    return float(vals[0]), u * np.sign(u.sum())


def lambda_eval(s: Geometry) -> float:
    return lambda_pair(s)[0]


def rayleigh_quotient(s: WarpedState, u) -> float:
    """``int (4|grad u|^2 + R u^2) / int u^2``."""
    u = _values(s, u)
    w = s.weights()
    return (4.0 * s.dirichlet_energy(u) + float(np.dot(w, s.scalar() * u * u))) / float(np.dot(w, u * u))


def spectrum(s: Geometry, k: int, ricci_lower: Optional[float] = None) -> SpectrumRecord:
    """First ``k`` eigenvalues of ``-Delta`` (with multiplicity) and ``lambda``.

    On profile states the spectrum is assembled from fibre-harmonic sectors:
    a fibre mode with eigenvalue ``mu`` on the unit fibre adds ``mu / phi^2``.
    """
    _require_closed(s)
    if k < 1:
        raise ValueError("k must be positive")
    if isinstance(s, FlatGrid):
        vals = np.sort(s.symbol().ravel())[:k]
        lam = 0.0
    else:
        phi2 = s.phi ** 2
        collected: List[float] = []
        for mu_f, mult in _fibre_harmonics(s.profile.k, k + 1):
            ev = _sector(s, 1.0, mu_f / phi2 if mu_f else np.zeros_like(phi2), k)
            if len(collected) >= k and ev[0] > sorted(collected)[k - 1]:
                break
            for v in ev:
                collected.extend([float(v)] * mult)
        vals = np.sort(np.array(collected))[:k]
        lam = lambda_eval(s)
    bound = ok = None
    if ricci_lower is not None:
        bound = s.n * ricci_lower
        ok = bool(len(vals) > 1 and vals[1] >= bound - 1e-3 * max(1.0, abs(bound)))
    return SpectrumRecord(vals, lam, bound, ok)


def eigenpair(s: WarpedState, index: int = 1):
    """``index``-th eigenpair of ``-Delta`` among radial functions, ``int u^2 = 1``."""
    _require_closed(s)
    vals, vecs = _sector(s, 1.0, np.zeros(s.profile.N), index + 1, vectors=True)
    u = vecs[:, index]
    i = int(np.argmax(np.abs(u)))
    return float(vals[index]), u * np.sign(u[i])


def _face_weighted(s: WarpedState, f, g) -> float:
    """``int g |grad f|^2 dV`` with ``g`` averaged to the faces."""
    p = s.profile
    coef = s.face_coefficients()
    e = p.extend(np.asarray(g, dtype=float), extrapolate_walls=False)
    gf = 0.5 * (e[1:] + e[:-1])
    d = np.diff(f)
    val = float(np.dot(coef[1:-1] * gf[1:-1], d * d))
    if p.base == "periodic":
        val += coef[0] * gf[0] * (f[0] - f[-1]) ** 2
    return val


def eigenvalue_rate(s: WarpedState, index: int = 1) -> float:
    """d lambda_index / dt under Ricci flow from the eigenfunction integral formula."""
    lam, u = eigenpair(s, index)
    k = s.profile.k
    krad, _ = s.curvatures()
    R = s.scalar()
    w = s.weights()
    return (2.0 * _face_weighted(s, u, k * krad) + lam * float(np.dot(w, R * u * u))
            - _face_weighted(s, u, R))


def eigenvalue_variation(s: WarpedState, V_s, V_f, index: int = 1) -> float:
    """Derivative of lambda_index along ``g + eps v`` for a diagonal variation ``v``."""
    lam, u = eigenpair(s, index)
    k = s.profile.k
    trv = np.asarray(V_s) + k * np.asarray(V_f)
    w = s.weights()
    return (-_face_weighted(s, u, V_s) - 0.5 * lam * float(np.dot(w, trv * u * u))
            + 0.5 * _face_weighted(s, u, trv))


def varied_state(s: WarpedState, V_s, V_f, eps: float) -> WarpedState:
    """The profile state of ``g + eps v`` for a diagonal variation ``v``."""
    p = s.profile
    ls = np.log1p(eps * np.asarray(V_s, dtype=float))
    lf = np.log1p(eps * np.asarray(V_f, dtype=float))
    dc = 0.5 * (lf - ls)
    gz = s.gauge
    c = s.c + dc
    cx = gz.cx(s.lam) + p.d1(dc)
    cxx = gz.c0xx + s.lam * gz.etaxx + p.d2(dc)
    g2 = Gauge.build(p, c, cx, cxx, (gz.eta, gz.etax, gz.etaxx))
    return WarpedState(s.t, p, s.a + 0.5 * ls, g2, 0.0)


# ---------------------------------------------------------------------------
# entropy derivative identities

def _soliton_residual(s: WarpedState, f, tau: Optional[float] = None):
    """Orthonormal components of ``Ric + Hess f`` (minus ``g/2tau``): radial, fibre."""
    ric_r, ric_f = s.ricci()
    f_ss, f_fib = s.hessian(f)
    rr, rf = ric_r + f_ss, ric_f + f_fib
    if tau is not None:
        rr = rr - 0.5 / tau
        rf = rf - 0.5 / tau
    return rr, rf


def f_rate(s: WarpedState, f) -> float:
    """``2 int |Ric + Hess f|^2 e^{-f} dV``."""
    f = _values(s, f)
    rr, rf = _soliton_residual(s, f)
    k = s.profile.k
    return 2.0 * float(np.dot(s.weights(), (rr * rr + k * rf * rf) * np.exp(-f)))


def w_rate(s: WarpedState, f, tau: float) -> float:
    """``2 tau int |Ric + Hess f - g/2tau|^2 (4 pi tau)^{-n/2} e^{-f} dV``."""
    f = _values(s, f)
    rr, rf = _soliton_residual(s, f, tau)
    k = s.profile.k
    c = (4 * math.pi * tau) ** (-0.5 * s.n)
    return 2.0 * tau * c * float(np.dot(s.weights(), (rr * rr + k * rf * rf) * np.exp(-f)))


def delta_f(s: WarpedState, f, var: ProfileVariation) -> float:
    """First variation of F in the direction ``(v, h)``."""
    f = _values(s, f)
    k = s.profile.k
    rr, rf = _soliton_residual(s, f)
    f_ss, f_fib = s.hessian(f)
    lap = f_ss + k * f_fib
    g2 = s.grad_sq(f)
    R = s.scalar()
    trv = var.trace(k)
    integrand = (-(var.V_s * rr + k * var.V_f * rf)
                 + (0.5 * trv - var.h) * (2 * lap - g2 + R))
    return float(np.dot(s.weights(), integrand * np.exp(-f)))


def delta_w(s: WarpedState, f, tau: float, var: ProfileVariation) -> float:
    """First variation of W in the direction ``(v, h, sigma)``."""
    f = _values(s, f)
    k, n = s.profile.k, s.n
    rr, rf = _soliton_residual(s, f)
    f_ss, f_fib = s.hessian(f)
    lap = f_ss + k * f_fib
    g2 = s.grad_sq(f)
    R = s.scalar()
    trv = var.trace(k)
    sig = var.sigma
    integrand = (sig * (R + g2) - tau * (var.V_s * rr + k * var.V_f * rf) + var.h
                 + (tau * (2 * lap - g2 + R) + f - n) * (0.5 * trv - var.h)
                 - 0.5 * n * sig / tau * (tau * (R + g2) + f - n))
    c = (4 * math.pi * tau) ** (-0.5 * n)
    return c * float(np.dot(s.weights(), integrand * np.exp(-f)))


def first_variation_check(s: WarpedState, f, var: ProfileVariation, eps_list: Sequence[float],
                          tau: Optional[float] = None, rel_tol: float = 1e-4) -> CheckReport:
    """Analytic first variation against forward difference quotients.

    The quotients are Richardson-extrapolated over consecutive ``eps`` pairs
    (which must halve) and the observed order of the raw quotients is
    reported; it should be one.
    """
    f = _values(s, f)
    eps = [float(e) for e in eps_list]
    if len(eps) < 2:
        raise ValueError("need at least two step sizes")
    if tau is None:
        base = f_eval(s, f)
        exact = delta_f(s, f, var)

        def value(e):
            return f_eval(varied_state(s, var.V_s, var.V_f, e), f + e * var.h)
        name = "first_variation_F"
    else:
        base = w_eval(s, f, tau, check=False)
        exact = delta_w(s, f, tau, var)

        def value(e):
            return w_eval(varied_state(s, var.V_s, var.V_f, e), f + e * var.h, tau + e * var.sigma, check=False)
        name = "first_variation_W"
    quot = np.array([(value(e) - base) / e for e in eps])
    rich = 2 * quot[1:] - quot[:-1]
    scale = max(abs(exact), 1e-12)
    trivial = np.all(np.abs(quot) < 1e-12) and abs(exact) < 1e-12
    if trivial:
        margins = [(rel_tol, 0.0, 0)]
        order = float("nan")
    else:
        margins = [(rel_tol - abs(r - exact) / scale, eps[i + 1], i) for i, r in enumerate(rich)]
        diffs = np.abs(np.diff(quot))
        order = float(np.log2(diffs[0] / diffs[1])) if len(diffs) > 1 and diffs[1] > 0 else float("nan")
    rep = make_report(name, margins, 0.0, {
        "analytic": exact, "quotients": quot, "richardson": rich, "eps": eps,
        "observed_order": order, "rel_tol": rel_tol,
    })
    return rep


# ---------------------------------------------------------------------------
# conjugate heat flow

def _apply_stiffness(s: WarpedState, u: np.ndarray) -> np.ndarray:
    diag, off, corner = s.stiffness()
    out = diag * u
    out[:-1] += off * u[1:]
    out[1:] += off * u[:-1]
    if corner:
        out[0] += corner * u[-1]
        out[-1] += corner * u[0]
    return out


def _stability_bound(s: WarpedState) -> float:
    """Largest eigenvalue of ``W^{-1} K`` (Gershgorin)."""
    diag, off, corner = s.stiffness()
    w = s.weights()
    row = np.abs(diag).copy()
    row[:-1] += np.abs(off)
    row[1:] += np.abs(off)
    if corner:
        row[0] += abs(corner)
        row[-1] += abs(corner)
    return float(np.max(row / w))


def conjugate_heat_step(s: WarpedState, s_next: WarpedState, f, tau: Optional[float] = None,
                        dt: Optional[float] = None, theta: float = 0.5) -> np.ndarray:
    """Carry a potential from ``s_next`` (time ``t + dt``) back to ``s`` (time ``t``).

    Without ``tau`` this is the F-coupled system (``int e^{-f} dV`` conserved);
    with ``tau`` (the value at ``s_next``, growing by ``dt`` going back) the
    W-coupled one.  The density ``u dV`` is updated in conservative theta-form
    ``(W u)_t = (W u)_{t+dt} - dt (theta K_t u_t + (1 - theta) K_{t+dt} u_{t+dt})``,
    so the discrete mass is conserved to round-off.
    """
    if not isinstance(s, WarpedState) or not isinstance(s_next, WarpedState):
        raise UnsupportedReduction("the conjugate heat flow needs profile states")
    if s.profile is not s_next.profile and s.profile.N != s_next.profile.N:
        raise GridMismatch("consecutive states must share the grid")
    f = _values(s_next, f)
    gap = s_next.t - s.t
    if dt is None:
        dt = gap
    if not dt > 0:
        raise CflViolation(f"backward step must be positive, got dt={dt}")
    if abs(dt - gap) > 1e-9 * max(1.0, abs(gap)) and gap != 0:
        raise CflViolation(f"dt={dt} does not match the state spacing {gap}")
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    if theta < 0.5:
        lim = 2.0 / ((1 - 2 * theta) * _stability_bound(s_next))
        if dt > lim:
            raise CflViolation(f"dt={dt:.3e} exceeds the explicit limit {lim:.3e}")
    n = s.n
    pref = 1.0 if tau is None else (4 * math.pi * tau) ** (-0.5 * n)
    u1 = pref * np.exp(-f)
    w0, w1 = s.weights(), s_next.weights()
    rhs = w1 * u1 - dt * (1 - theta) * _apply_stiffness(s_next, u1)
    d0, o0, c0 = s.stiffness()
    if c0:
        A = sp.diags(w0) + dt * theta * stiffness_matrix(s)
        u0 = spla.spsolve(A.tocsc(), rhs)
    else:
        ab = np.zeros((3, w0.size))
        ab[0, 1:] = dt * theta * o0
        ab[1] = w0 + dt * theta * d0
        ab[2, :-1] = dt * theta * o0
        u0 = sla.solve_banded((1, 1), ab, rhs)
    if not np.all(u0 > 0):
        raise NonConvergence("conjugate heat solution lost positivity",
                             {"t": s.t, "min_u": float(np.min(u0))})
    if tau is None:
        return -np.log(u0)
    return -np.log(u0) - 0.5 * n * math.log(4 * math.pi * (tau + dt))


@dataclass
class CoupledRun:
    """Potentials carried backward along stored states (``fields[i]`` lives on ``states[i]``)."""

    states: list
    fields: List[np.ndarray]
    taus: Optional[List[float]]
    mode: str

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


def couple(states, f_final, tau_final: Optional[float] = None, theta: float = 0.5) -> CoupledRun:
    """Solve the coupled potential equation backward from the last state."""
    states = list(getattr(states, "states", states))
    if len(states) < 2:
        raise ValueError("need at least two states")
    f = _values(states[-1], f_final)
    fields = [f]
    taus = None if tau_final is None else [float(tau_final)]
    tau = tau_final
    for s0, s1 in zip(states[-2::-1], states[:0:-1]):
        f = conjugate_heat_step(s0, s1, f, tau, theta=theta)
        if tau is not None:
            tau = tau + (s1.t - s0.t)
            taus.append(tau)
        fields.append(f)
    fields.reverse()
    if taus is not None:
        taus.reverse()
    return CoupledRun(states, fields, taus, "F" if tau_final is None else "W")


# ---------------------------------------------------------------------------
# mu

@dataclass
class MuResult:
    mu: float
    f: np.ndarray
    tau: float
    history_min: float
    evaluations: int
    seed: int
    converged: bool


class _LogSobolev:
    """``W`` as a function of ``w = (4 pi tau)^{-n/4} e^{-f/2}`` with unit L^2 norm."""

    def __init__(self, s: Geometry, tau: float):
        self.s, self.tau, self.n = s, tau, s.n
        if isinstance(s, FlatGrid):
            self.w = s.weights().ravel()
            self.R = np.zeros_like(self.w)
            self.K = None
        else:
            self.w = s.weights()
            self.R = s.scalar()
            self.K = stiffness_matrix(s)
        self.const = -0.5 * self.n * math.log(4 * math.pi * tau) - self.n
        self.calls = 0
        self.best = math.inf

    def energy(self, w):
        if self.K is not None:
            Kw = self.K @ w
            return float(w @ Kw), 2.0 * Kw
        s = self.s
        g = w.reshape(s.shape)
        lap = s.laplacian(g).ravel()
        E = -float(np.dot(self.w, g.ravel() * lap))
        return E, -2.0 * self.w * lap

    def __call__(self, y):
        self.calls += 1
        W = self.w
        rho = math.sqrt(float(np.dot(W, y * y)))
        w = y / rho
        E, dE = self.energy(w)
        w2 = w * w
        logw2 = np.log(np.maximum(w2, 1e-300))
        J = self.tau * (4 * E + float(np.dot(W, self.R * w2))) - float(np.dot(W, w2 * logw2)) + self.const
        g = self.tau * (4 * dE + 2 * W * self.R * w) - W * (2 * w * logw2 + 2 * w)
        grad = (g - W * w * float(np.dot(w, g))) / rho
        self.best = min(self.best, J)
        return J, grad

    def potential(self, y) -> np.ndarray:
        w = np.abs(y) / math.sqrt(float(np.dot(self.w, y * y)))
        w = np.maximum(w, 1e-150)
        return -2 * np.log(w) - 0.5 * self.n * math.log(4 * math.pi * self.tau)


def mu_eval(s: Geometry, tau: float, restarts: int = 3, seed: int = 0,
            maxiter: int = 5000, gtol: float = 1e-10) -> MuResult:
    """Infimum of W over compatible potentials.

    Minimizes the log-Sobolev form in ``w = (4 pi tau)^{-n/4} e^{-f/2}`` with
    L-BFGS from the uniform start and ``restarts`` seeded random starts.
    """
    if not tau > 0:
        raise NonPositiveTau(f"tau must be positive, got {tau}")
    _require_closed(s)
    obj = _LogSobolev(s, tau)
    rng = np.random.default_rng(seed)
    size = obj.w.size
    starts = [np.ones(size)]
    for _ in range(restarts):
        starts.append(np.exp(0.5 * rng.standard_normal(size)))
    if isinstance(s, FlatGrid):
        # a concentrated start lets the optimizer find localized minimizers quickly
        r2 = sum((c - 0.5 * s.extent) ** 2 for c in s.coords()).ravel()
        starts.append(np.exp(-r2 / (8 * tau)) + 1e-8)
    best = None
    for y0 in starts:
        res = sopt.minimize(obj, y0, jac=True, method="L-BFGS-B",
                            options={"maxiter": maxiter, "gtol": gtol, "ftol": 1e-15})
        if not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise NonConvergence("log-Sobolev minimization failed", {"tau": tau, "evaluations": obj.calls})
    f = obj.potential(best.x)
    if isinstance(s, FlatGrid):
        f = f.reshape(s.shape)
    return MuResult(float(best.fun), f, tau, obj.best, obj.calls, seed, bool(best.success))


# ---------------------------------------------------------------------------
# records and monotonicity

def entropy_record(s: WarpedState, f=None, tau: Optional[float] = None, with_mu: bool = False) -> EntropyRecord:
    if f is None:
        f = normalize_potential(s, np.zeros(s.profile.N), tau)
    F, m, _ = _parts(s, f)
    W = w_eval(s, f, tau, check=False) if tau is not None else float("nan")
    lam = lambda_eval(s) if s.profile.closed else float("nan")
    mu = mu_eval(s, tau).mu if (with_mu and tau is not None) else None
    pm = m if tau is None else m * (4 * math.pi * tau) ** (-0.5 * s.n)
    return EntropyRecord(s.t, F, W, float("nan") if tau is None else tau, lam, mu, s.volume(), pm)


def monotonicity_probe(traj, mode: str, coupled: Optional[CoupledRun] = None,
                       tol: float = 1e-9, rel_tol: float = 5e-3, stride: int = 1) -> CheckReport:
    """Non-decrease of F, W or lambda along a trajectory.

    For F and W the derivative identity is also checked: centred differences
    of the functional at every ``stride``-th interior sample against the
    integral of the squared soliton residual.  The reported margin is the
    smaller of the monotonicity margin and ``rel_tol`` minus the worst
    relative identity error (so the report tolerance is zero).
    """
    mode = mode if mode == "lambda" else mode.upper()
    if mode not in ("F", "W", "lambda"):
        raise ValueError("mode must be F, W or lambda")
    if mode == "lambda":
        states = list(getattr(traj, "states", traj))
        ts = np.array([s.t for s in states])
        vals = np.array([lambda_eval(s) for s in states])
        margins = [(vals[i + 1] - vals[i] + tol, ts[i + 1], i + 1) for i in range(len(vals) - 1)]
        return make_report("monotonicity_lambda", margins, 0.0, {"t": ts, "lambda": vals})
    if coupled is None or coupled.mode != mode:
        raise ValueError(f"{mode}-mode needs a {mode}-coupled potential")
    states, fields = coupled.states, coupled.fields
    ts = coupled.times
    if mode == "F":
        vals = np.array([f_eval(s, f) for s, f in zip(states, fields)])
    else:
        vals = np.array([w_eval(s, f, tau, check=False) for s, f, tau in zip(states, fields, coupled.taus)])
    idx = np.arange(0, len(states), max(1, stride))
    margins = []
    for j in range(len(idx) - 1):
        margins.append((vals[idx[j + 1]] - vals[idx[j]] + tol, ts[idx[j + 1]], int(idx[j + 1])))
    errs = []
    for j in range(1, len(idx) - 1):
        i0, i, i1 = idx[j - 1], idx[j], idx[j + 1]
        h0, h1 = ts[i] - ts[i0], ts[i1] - ts[i]
        fd = (h0 * h0 * (vals[i1] - vals[i]) + h1 * h1 * (vals[i] - vals[i0])) / (h0 * h1 * (h0 + h1))
        rhs = f_rate(states[i], fields[i]) if mode == "F" else w_rate(states[i], fields[i], coupled.taus[i])
        rel = abs(fd - rhs) / max(abs(rhs), 1e-12)
        errs.append((float(ts[i]), float(fd), float(rhs), rel))
        margins.append((rel_tol - rel, ts[i], int(i)))
    return make_report(f"monotonicity_{mode}", margins, 0.0,
                       {"t": ts[idx], "values": vals[idx], "identity": errs, "rel_tol": rel_tol})
