"""Rotationally symmetric metrics ``g = psi(x)^2 dx^2 + phi(x)^2 g_{S^k}``.

The radial coordinate ``x`` lives on a cell-centred uniform grid over a base
interval.  We write ``psi = exp(a)`` and ``phi = exp(a + c) h(x)`` where
``h`` is the base warping function (``sin x`` for a sphere, ``x`` for a
plane, ``1`` for a line or circle) and ``c`` is a log-ratio that is held
(almost) fixed while the metric evolves; it is the gauge.  ``k = 1`` gives surfaces (and
then ``exp(2a)`` is a conformal factor when ``c = 0``), ``k = 2`` gives
3-manifolds with round 2-sphere fibres.  ``k = 0`` on a periodic base is a
circle.

Boundary behaviour per base:

========  ============  ===========================================
base      interval      ends
========  ============  ===========================================
sphere    (0, pi)       both poles (even reflection)
plane     (0, X)        pole at 0, wall at X (Neumann or Dirichlet)
line      (0, X)        two walls
periodic  (0, X)        wrap-around
========  ============  ===========================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple

import numpy as np

from . import kernels
from .errors import GridMismatch

BASES = ("sphere", "plane", "line", "periodic")
FIBRE_VOLUME = {0: 1.0, 1: 2.0 * math.pi, 2: 4.0 * math.pi}


@dataclass(frozen=True, eq=False)
class Profile:
    """Static grid description; ``dirichlet(t) -> (left, right)`` face values of ``a``."""

    base: str
    k: int
    N: int
    length: float = math.pi
    wall: str = "neumann"
    dirichlet: Optional[Callable[[float], Tuple[float, float]]] = None

    x: np.ndarray = field(init=False, repr=False)
    faces: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"unknown base {self.base!r}")
        if self.k not in (0, 1, 2):
            raise ValueError("fibre dimension k must be 0, 1 or 2")
        if self.N < 4:
            raise ValueError("need at least 4 cells")
        if self.base in ("sphere", "plane") and self.k == 0:
            raise ValueError("pole bases need a fibre (k >= 1)")
        length = math.pi if self.base == "sphere" else float(self.length)
        if length <= 0:
            raise ValueError("base length must be positive")
        object.__setattr__(self, "length", length)
        dx = length / self.N
        x = (np.arange(self.N) + 0.5) * dx
        faces = np.arange(self.N + 1) * dx
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "dx", dx)
        h, hph, hpph, kappa = self._base_functions(x)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "hph", hph)
        object.__setattr__(self, "hpph", hpph)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "hf", self._h(faces))
        object.__setattr__(self, "Hk", self._cell_integrals(faces))
        lc, rc = self.codes
        object.__setattr__(self, "left_code", lc)
        object.__setattr__(self, "right_code", rc)

    # -- base data -----------------------------------------------------
    def _h(self, x):
        if self.base == "sphere":
            return np.sin(x)
        if self.base == "plane":
            return np.asarray(x, dtype=float).copy()
        return np.ones_like(np.asarray(x, dtype=float))

    def _base_functions(self, x):
        if self.base == "sphere":
            return np.sin(x), np.cos(x) / np.sin(x), -np.ones_like(x), 1.0
        if self.base == "plane":
            return x.copy(), 1.0 / x, np.zeros_like(x), 0.0
        return np.ones_like(x), np.zeros_like(x), np.zeros_like(x), 0.0

    def _cell_integrals(self, f):
        lo, hi = f[:-1], f[1:]
        k = self.k
        if self.base == "sphere":
            if k == 1:
                return np.cos(lo) - np.cos(hi)
            return 0.5 * ((hi - lo) - (np.sin(hi) * np.cos(hi) - np.sin(lo) * np.cos(lo)))
        if self.base == "plane":
            return (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)
        return hi - lo

    @property
    def n(self) -> int:
        """Manifold dimension."""
        return self.k + 1

    @property
    def omega(self) -> float:
        return FIBRE_VOLUME[self.k]

    @property
    def closed(self) -> bool:
        return self.base in ("sphere", "periodic")

    @property
    def codes(self):
        E, D, P = kernels.EVEN, kernels.DIRICHLET, kernels.PERIODIC
        if self.base == "sphere":
            return E, E
        if self.base == "periodic":
            return P, P
        wall = D if self.wall == "dirichlet" else E
        if self.base == "plane":
            return E, wall
        return wall, wall

    def boundary_values(self, t: float):
        if self.dirichlet is None:
            return 0.0, 0.0
        lv, rv = self.dirichlet(t)
        return float(lv), float(rv)

    def extend(self, f: np.ndarray, extrapolate_walls: bool = True) -> np.ndarray:
        """Copy of ``f`` with one ghost cell per side (even at poles, wrap if periodic)."""
        e = np.empty(f.size + 2)
        e[1:-1] = f
        if self.base == "periodic":
            e[0], e[-1] = f[-1], f[0]
            return e
        e[0], e[-1] = f[0], f[-1]
        if extrapolate_walls:
            if self.base == "line":
                e[0] = 2 * f[0] - f[1]
            if self.base in ("plane", "line"):
                e[-1] = 2 * f[-1] - f[-2]
        return e

    def d1(self, f: np.ndarray) -> np.ndarray:
        e = self.extend(f)
        return (e[2:] - e[:-2]) / (2 * self.dx)

    def d2(self, f: np.ndarray) -> np.ndarray:
        e = self.extend(f)
        return (e[2:] - 2 * f + e[:-2]) / self.dx**2


@dataclass(frozen=True, eq=False)
class Gauge:
    """Log-ratio ``c = c0 + lam * eta`` between fibre and radial factors.

    ``c0`` is fixed by the initial data.  ``eta`` is a relaxation profile that
    vanishes at the poles; its amplitude ``lam`` (carried by the state)
    absorbs the change of the conformal modulus of the meridian, which a
    fully fixed ratio cannot do without a singular diffeomorphism at one pole.
    On sphere bases with ``k = 2`` the default is ``sin(2x)^2``, which also
    vanishes at the equator, so the middle of the profile keeps its ratio and
    grid points migrate into a forming neck.
    """

    c0: np.ndarray
    c0x: np.ndarray
    c0xx: np.ndarray
    eta: np.ndarray
    etax: np.ndarray
    etaxx: np.ndarray

    @classmethod
    def build(cls, prof: Profile, c=None, cx=None, cxx=None, eta=None) -> "Gauge":
        c = np.zeros(prof.N) if c is None else np.asarray(c, dtype=float)
        if c.shape != (prof.N,):
            raise GridMismatch("gauge array has the wrong length")
        cx = prof.d1(c) if cx is None else np.asarray(cx, dtype=float)
        cxx = prof.d2(c) if cxx is None else np.asarray(cxx, dtype=float)
        if eta is None:
            if prof.base == "sphere" and prof.k == 2:
                x = prof.x
                eta = (np.sin(2 * x) ** 2, 2 * np.sin(4 * x), 8 * np.cos(4 * x))
            else:
                z = np.zeros(prof.N)
                eta = (z, z, z)
        e, ex, exx = (np.asarray(q, dtype=float) for q in eta)
        return cls(c, cx, cxx, e, ex, exx)

    def c(self, lam: float = 0.0) -> np.ndarray:
        return self.c0 + lam * self.eta

    def cx(self, lam: float = 0.0) -> np.ndarray:
        return self.c0x + lam * self.etax

    def static(self, prof: Profile):
        """Tuple of grid arrays in the order the kernels expect."""
        cached = getattr(self, "_static", None)
        if cached is None or cached[0] is not prof:
            arrs = (self.c0, self.c0x, self.c0xx, self.eta, self.etax, self.etaxx,
                    prof.hph, prof.hpph, 1.0 / prof.h, prof.h, prof.Hk)
            cached = (prof, tuple(np.ascontiguousarray(q) for q in arrs))
            object.__setattr__(self, "_static", cached)
        return cached[1]


@dataclass(frozen=True, eq=False)
class WarpedState:
    """A rotationally symmetric metric at time ``t``."""

    t: float
    profile: Profile
    a: np.ndarray
    gauge: Gauge
    lam: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.shape != (self.profile.N,):
            raise GridMismatch(f"profile has {self.profile.N} cells, got {a.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def make(cls, prof: Profile, a, c=None, t: float = 0.0, cx=None, cxx=None, eta=None) -> "WarpedState":
        a = np.broadcast_to(np.asarray(a, dtype=float), (prof.N,)).copy()
        return cls(t, prof, a, Gauge.build(prof, c, cx, cxx, eta))

    def with_a(self, a, t=None, lam=None) -> "WarpedState":
        return WarpedState(self.t if t is None else t, self.profile, a, self.gauge,
                           self.lam if lam is None else lam)

    @property
    def c(self) -> np.ndarray:
        return self.gauge.c(self.lam)

    def kernel_geometry(self):
        """Positional arguments ``(static, k, kappa, poles, dx, left, right)``."""
        p = self.profile
        return (self.gauge.static(p), p.k, p.kappa, int(p.base in ("sphere", "plane")),
                p.dx, p.left_code, p.right_code)

    # -- reduced-coordinate views ---------------------------------------
    @property
    def reduction(self) -> str:
        p = self.profile
        if p.k == 1 and p.base == "sphere" and not np.any(self.c):
            return "Surface"
        if p.k == 2 and p.base == "sphere":
            return "Warped3"
        return f"Warped({p.base},k={p.k})"

    @property
    def n(self) -> int:
        return self.profile.n

    @property
    def psi(self) -> np.ndarray:
        return np.exp(self.a)

    @property
    def b(self) -> np.ndarray:
        return self.a + self.c

    @property
    def phi(self) -> np.ndarray:
        return np.exp(self.b) * self.profile.h

    @property
    def u(self) -> np.ndarray:
        """Conformal factor exponent (surface reduction)."""
        return self.a

    def face_a(self) -> np.ndarray:
        """``a`` at the N+1 faces (boundary faces from ghosts)."""
        p = self.profile
        lv, rv = p.boundary_values(self.t)
        e = np.empty(p.N + 2)
        e[1:-1] = self.a
        if p.base == "periodic":
            e[0], e[-1] = self.a[-1], self.a[0]
        else:
            e[0] = 2 * lv - self.a[0] if p.left_code == kernels.DIRICHLET else self.a[0]
            e[-1] = 2 * rv - self.a[-1] if p.right_code == kernels.DIRICHLET else self.a[-1]
        return 0.5 * (e[1:] + e[:-1])

    # -- curvature -------------------------------------------------------
    def fields(self):
        """(K_rad, K_tan, v, a_t): radial/tangential sectional curvatures, gauge field, rate."""
        lv, rv = self.profile.boundary_values(self.t)
        return kernels.warped_fields(self.a, self.lam, *self.kernel_geometry(), lv, rv)[:4]

    def curvatures(self):
        krad, ktan, _, _ = self.fields()
        return krad, ktan

    def ricci(self):
        """Orthonormal Ricci eigenvalues (radial, fibre)."""
        krad, ktan = self.curvatures()
        k = self.profile.k
        return k * krad, krad + (k - 1) * ktan

    def scalar(self) -> np.ndarray:
        krad, ktan = self.curvatures()
        k = self.profile.k
        return 2 * k * krad + k * (k - 1) * ktan

    def max_abs_sectional(self) -> float:
        krad, ktan = self.curvatures()
        m = float(np.max(np.abs(krad)))
        if self.profile.k >= 2:
            m = max(m, float(np.max(np.abs(ktan))))
        return m

    def curvature_operator(self):
        """Hamilton-normalized eigenvalues (alpha) for k = 2: (2 K_tan, 2 K_rad, 2 K_rad)."""
        krad, ktan = self.curvatures()
        return np.stack([2 * ktan, 2 * krad, 2 * krad], axis=-1)

    # -- measure ---------------------------------------------------------
    def weights(self) -> np.ndarray:
        """Cell volumes."""
        p = self.profile
        return p.omega * np.exp(self.a + p.k * self.b) * p.Hk

    def volume(self) -> float:
        return float(self.weights().sum())

    def integrate(self, f) -> float:
        return float(np.dot(self.weights(), f))

    def face_coefficients(self) -> np.ndarray:
        """Dirichlet-form weights: sum_j coef_j (f_j - f_{j-1})^2 approximates int |grad f|^2."""
        p = self.profile
        q = p.k * self.b - self.a
        e = np.empty(p.N + 2)
        e[1:-1] = q
        if p.base == "periodic":
            e[0], e[-1] = q[-1], q[0]
        else:
            e[0], e[-1] = q[0], q[-1]
        qf = 0.5 * (e[1:] + e[:-1])
        coef = p.omega * np.exp(qf) * p.hf**p.k / p.dx
        if p.base != "periodic":
            coef[0] = coef[-1] = 0.0
        return coef

    def stiffness(self):
        """Tridiagonal (diag, offdiag) of the Dirichlet form; periodic corner returned separately."""
        coef = self.face_coefficients()
        N = self.profile.N
        if self.profile.base == "periodic":
            diag = coef[:-1] + coef[1:]
            diag[0] = coef[1] + coef[0]
            off = -coef[1:-1]
            return diag, off, -coef[0]
        diag = coef[:-1] + coef[1:]
        off = -coef[1:-1]
        return diag, off, 0.0

    def dirichlet_energy(self, f) -> float:
        coef = self.face_coefficients()
        f = np.asarray(f, dtype=float)
        d = np.diff(f)
        E = float(np.dot(coef[1:-1], d * d))
        if self.profile.base == "periodic":
            E += coef[0] * (f[0] - f[-1]) ** 2
        return E

    def laplacian(self, f) -> np.ndarray:
        """Discrete Laplace-Beltrami, self-adjoint for the cell weights."""
        coef = self.face_coefficients()
        f = np.asarray(f, dtype=float)
        p = self.profile
        e = np.empty(p.N + 2)
        e[1:-1] = f
        if p.base == "periodic":
            e[0], e[-1] = f[-1], f[0]
        else:
            e[0], e[-1] = f[0], f[-1]
        flux = coef * (e[1:] - e[:-1])
        return (flux[1:] - flux[:-1]) / self.weights()

    def grad_sq(self, f) -> np.ndarray:
        """|grad f|^2 at cell centres (central differences)."""
        p = self.profile
        e = np.empty(p.N + 2)
        e[1:-1] = f
        if p.base == "periodic":
            e[0], e[-1] = f[-1], f[0]
        else:
            e[0], e[-1] = f[0], f[-1]
        fx = (e[2:] - e[:-2]) / (2 * p.dx)
        return np.exp(-2 * self.a) * fx**2

    def radial_derivative(self, f) -> np.ndarray:
        """df/ds at cell centres (s = arclength)."""
        p = self.profile
        e = p.extend(np.asarray(f, dtype=float))
        return np.exp(-self.a) * (e[2:] - e[:-2]) / (2 * p.dx)

    def hessian(self, f):
        """Orthonormal Hessian eigen-components (radial f_ss, fibre (phi_s/phi) f_s)."""
        p = self.profile
        e = p.extend(np.asarray(f, dtype=float))
        fx = (e[2:] - e[:-2]) / (2 * p.dx)
        fxx = (e[2:] - 2 * e[1:-1] + e[:-2]) / p.dx**2
        ax = self._ax()
        f_ss = np.exp(-2 * self.a) * (fxx - ax * fx)
        bx = ax + self.gauge.cx(self.lam)
        f_fib = np.exp(-2 * self.a) * (p.hph + bx) * fx
        return f_ss, f_fib

    def _ax(self):
        p = self.profile
        lv, rv = p.boundary_values(self.t)
        e = np.empty(p.N + 2)
        e[1:-1] = self.a
        if p.base == "periodic":
            e[0], e[-1] = self.a[-1], self.a[0]
        else:
            e[0] = 2 * lv - self.a[0] if p.left_code == kernels.DIRICHLET else self.a[0]
            e[-1] = 2 * rv - self.a[-1] if p.right_code == kernels.DIRICHLET else self.a[-1]
        return (e[2:] - e[:-2]) / (2 * p.dx)

    # -- distances -------------------------------------------------------
    def node_arclength(self) -> np.ndarray:
        """Arclength from the left end to each of the N+1 grid nodes (cell faces)."""
        p = self.profile
        psi_f = np.exp(self.face_a())
        cell = p.dx * (psi_f[:-1] + 4 * np.exp(self.a) + psi_f[1:]) / 6.0
        return np.concatenate([[0.0], np.cumsum(cell)])

    def arclength(self) -> np.ndarray:
        """Arclength from the left end to each cell centre."""
        p = self.profile
        psi_f = np.exp(self.face_a())
        return self.node_arclength()[:-1] + 0.25 * p.dx * (psi_f[:-1] + np.exp(self.a))

    def total_length(self) -> float:
        return float(self.node_arclength()[-1])

    def distance(self, i: int, j: int) -> float:
        """Length of the meridian segment between grid nodes ``i`` and ``j`` (0..N)."""
        s = self.node_arclength()
        d = abs(float(s[j] - s[i]))
        if self.profile.base == "periodic":
            d = min(d, float(s[-1]) - d)
        return d

    def scaled(self, lam: float) -> "WarpedState":
        """The metric ``lam * g`` (same coordinates)."""
        return self.with_a(self.a + 0.5 * math.log(lam))


def round_sphere_state(k: int, N: int, r: float = 1.0, t: float = 0.0) -> WarpedState:
    """Round S^{k+1}(r)."""
    return WarpedState.make(Profile("sphere", k, N), math.log(r), t=t)


def flat_disk_state(N: int, radius: float) -> WarpedState:
    return WarpedState.make(Profile("plane", 1, N, radius), 0.0)


def flat_torus_state(N: int, side: float, k: int = 1, fibre_side: Optional[float] = None) -> WarpedState:
    """Flat torus ``[0, side] x S^1`` (k = 1) or circle (k = 0).

    ``fibre_side`` is the length of the fibre circle (defaults to ``side``).
    """
    prof = Profile("periodic", k, N, side)
    fs = side if fibre_side is None else fibre_side
    c = np.full(N, math.log(fs / (2 * math.pi))) if k == 1 else np.zeros(N)
    return WarpedState.make(prof, 0.0, c)


def cylinder_state(N: int, radius: float, half_length: float) -> WarpedState:
    """Round cylinder ``S^2(radius) x [-L, L]`` on the line base (test state)."""
    prof = Profile("line", 2, N, 2 * half_length)
    return WarpedState.make(prof, 0.0, np.full(N, math.log(radius)))


def conformal_sphere_state(u, N: int, t: float = 0.0) -> WarpedState:
    """Surface ``exp(2u) g_{S^2}`` with ``u`` a callable of the polar angle or an array."""
    prof = Profile("sphere", 1, N)
    vals = u(prof.x) if callable(u) else np.asarray(u, dtype=float)
    return WarpedState.make(prof, vals, t=t)
