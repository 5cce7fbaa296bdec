"""Closed-form metric families and exact Ricci flow solutions used as oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Tuple

import numpy as np

from .errors import BeyondExtinction, NonPositiveTau, OutOfChart, UnsupportedBrackets
from .tensor import ChartPoint, MetricSample


class Kind(str, Enum):
    FLAT = "flat"
    TORUS = "torus"
    SPHERE = "sphere"
    HYPERBOLIC = "hyperbolic"
    CIGAR = "cigar"
    NIL = "nil"
    SOL = "sol"


_FIXED_DIM = {Kind.CIGAR: 2, Kind.NIL: 3, Kind.SOL: 3}


@dataclass(frozen=True)
class MetricFamily:
    """A named metric family.

    ``params`` meaning per kind: sphere/hyperbolic ``(r,)``; torus ``(side,)``;
    cigar ``(t,)`` selects the time-``t`` member of the steady soliton written
    in fixed coordinates, ``(dx^2 + dy^2) / (e^{4t} + x^2 + y^2)``.
    """

    kind: Kind
    dim: int
    params: Tuple[float, ...] = ()

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if kind in _FIXED_DIM and self.dim != _FIXED_DIM[kind]:
            raise ValueError(f"{kind.value} has fixed dimension {_FIXED_DIM[kind]}")
        if not 1 <= self.dim <= 3:
            raise ValueError("dimension must be 1, 2 or 3")
        if kind in (Kind.SPHERE, Kind.HYPERBOLIC) and self.dim < 2:
            raise ValueError("sphere and hyperbolic families need dim >= 2")
        if kind in (Kind.SPHERE, Kind.HYPERBOLIC, Kind.TORUS):
            if not self.params or self.params[0] <= 0:
                raise ValueError(f"{kind.value} needs a positive scale parameter")

    @property
    def radius(self) -> float:
        return self.params[0] if self.params else 1.0


def flat(dim: int = 2) -> MetricFamily:
    return MetricFamily(Kind.FLAT, dim)


def sphere(dim: int, r: float = 1.0) -> MetricFamily:
    return MetricFamily(Kind.SPHERE, dim, (r,))


def hyperbolic(dim: int, r: float = 1.0) -> MetricFamily:
    return MetricFamily(Kind.HYPERBOLIC, dim, (r,))


def cigar(t: float = 0.0) -> MetricFamily:
    return MetricFamily(Kind.CIGAR, 2, (t,))


# ---------------------------------------------------------------------------
# sampling

def _warped_polar(x, r, s, ds, dds):
    """Metric r^2 (dx_0^2 + s(x_0)^2 dx_1^2 + s(x_0)^2 s(x_1)^2 dx_2^2 ...)."""
    d = x.size
    sv, dv, ddv = s(x), ds(x), dds(x)
    diag = np.empty(d)
    dg = np.zeros((d, d, d))
    d2g = np.zeros((d, d, d, d))
    for k in range(d):
        diag[k] = r * r * np.prod(sv[:k] ** 2)
        for m in range(k):
            dg[m, k, k] = diag[k] * 2 * dv[m] / sv[m]
            d2g[m, m, k, k] = diag[k] * 2 * (dv[m] ** 2 + sv[m] * ddv[m]) / sv[m] ** 2
            for l in range(m + 1, k):
                d2g[m, l, k, k] = d2g[l, m, k, k] = diag[k] * 4 * dv[m] * dv[l] / (sv[m] * sv[l])
    return MetricSample(np.diag(diag), dg, d2g)


def sample(family: MetricFamily, p) -> MetricSample:
    x = p.coords if isinstance(p, ChartPoint) else ChartPoint(p).coords
    d = family.dim
    if x.size != d:
        raise ValueError(f"chart point has {x.size} coordinates, family has dim {d}")
    kind = family.kind
    if kind in (Kind.FLAT, Kind.TORUS):
        return MetricSample(np.eye(d), np.zeros((d, d, d)), np.zeros((d, d, d, d)))
    if kind is Kind.SPHERE:
        ang = x[:-1]
        if np.any(ang <= 0) or np.any(ang >= math.pi):
            raise OutOfChart("polar angles must lie strictly inside (0, pi)")
        return _warped_polar(x, family.radius, np.sin, np.cos, lambda y: -np.sin(y))
    if kind is Kind.HYPERBOLIC:
        if x[0] <= 0 or (d == 3 and not 0 < x[1] < math.pi):
            raise OutOfChart("polar chart needs rho > 0 and interior angles")
        s = [np.sinh, np.sin]
        ds = [np.cosh, np.cos]
        dds = [np.sinh, lambda y: -np.sin(y)]
        pick = lambda fs: (lambda y: np.array([fs[min(i, 1)](y[i]) for i in range(y.size)]))
        return _warped_polar(x, family.radius, pick(s), pick(ds), pick(dds))
    if kind is Kind.CIGAR:
        c = math.exp(4 * (family.params[0] if family.params else 0.0))
        phi = 1.0 / (c + x @ x)
        dphi = -2 * x * phi**2
        ddphi = -2 * np.eye(2) * phi**2 + 8 * np.outer(x, x) * phi**3
        I = np.eye(2)
        return MetricSample(phi * I, np.einsum("k,ij->kij", dphi, I),
                            np.einsum("kl,ij->klij", ddphi, I))
    if kind is Kind.NIL:
        # dx^2 + dy^2 + (dz - x dy)^2
        xx = x[0]
        g = np.array([[1.0, 0, 0], [0, 1 + xx * xx, -xx], [0, -xx, 1.0]])
        dg = np.zeros((3, 3, 3))
        dg[0] = [[0, 0, 0], [0, 2 * xx, -1], [0, -1, 0]]
        d2g = np.zeros((3, 3, 3, 3))
        d2g[0, 0, 1, 1] = 2.0
        return MetricSample(g, dg, d2g)
    if kind is Kind.SOL:
        z = x[2]
        e, ei = math.exp(2 * z), math.exp(-2 * z)
        g = np.diag([e, ei, 1.0])
        dg = np.zeros((3, 3, 3))
        dg[2] = np.diag([2 * e, -2 * ei, 0])
        d2g = np.zeros((3, 3, 3, 3))
        d2g[2, 2] = np.diag([4 * e, 4 * ei, 0])
        return MetricSample(g, dg, d2g)
    raise ValueError(f"unknown family {kind}")


def closed_form_scalar(family: MetricFamily, p=None) -> float:
    """Scalar curvature from the closed forms (oracle side of the geometry tests)."""
    n = family.dim
    if family.kind in (Kind.FLAT, Kind.TORUS):
        return 0.0
    if family.kind is Kind.SPHERE:
        return n * (n - 1) / family.radius**2
    if family.kind is Kind.HYPERBOLIC:
        return -n * (n - 1) / family.radius**2
    if family.kind is Kind.CIGAR:
        c = math.exp(4 * (family.params[0] if family.params else 0.0))
        x = np.asarray(p.coords if isinstance(p, ChartPoint) else p, dtype=float)
        return 4 * c / (c + x @ x)
    if family.kind is Kind.NIL:
        return -0.5
    if family.kind is Kind.SOL:
        return -2.0
    raise ValueError(family.kind)


# ---------------------------------------------------------------------------
# exact flows

@dataclass(frozen=True)
class ExactFlow:
    family: MetricFamily
    t: float
    scale: float
    extinction_time: float = math.inf


def einstein_scale(lam: float, t: float) -> float:
    """rho^2(t) = 1 - 2 lambda t for an Einstein metric with Ric = lambda g."""
    return 1.0 - 2.0 * lam * t


def extinction_time(family: MetricFamily) -> float:
    if family.kind is Kind.SPHERE:
        return family.radius**2 / (2 * (family.dim - 1))
    return math.inf


def exact_flow(family: MetricFamily, t: float) -> ExactFlow:
    n = family.dim
    if family.kind is Kind.SPHERE:
        T = extinction_time(family)
        if t >= T:
            raise BeyondExtinction(f"t={t} is at or past extinction time {T}")
        r2 = family.radius**2 - 2 * (n - 1) * t
        return ExactFlow(sphere(n, math.sqrt(r2)), t, r2 / family.radius**2, T)
    if family.kind is Kind.HYPERBOLIC:
        r2 = family.radius**2 + 2 * (n - 1) * t
        if r2 <= 0:
            raise BeyondExtinction("backward time before the hyperbolic big bang")
        return ExactFlow(hyperbolic(n, math.sqrt(r2)), t, r2 / family.radius**2)
    if family.kind is Kind.CIGAR:
        t0 = family.params[0] if family.params else 0.0
        return ExactFlow(cigar(t0 + t), t, 1.0)
    if family.kind in (Kind.FLAT, Kind.TORUS):
        return ExactFlow(family, t, 1.0)
    raise ValueError(f"no closed-form flow for {family.kind.value}; integrate the homogeneous ODE")


# ---------------------------------------------------------------------------
# homogeneous 3-geometries in a Milnor frame

NIL_BRACKETS = (0.0, 0.0, 1.0)
SOL_BRACKETS = (1.0, -1.0, 0.0)
FLAT_BRACKETS = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class HomogeneousState:
    """Diagonal left-invariant metric ``A e1* ^2 + B e2* ^2 + C e3* ^2``.

    Brackets ``(l1, l2, l3)`` mean ``[e2,e3] = l1 e1``, ``[e3,e1] = l2 e2``,
    ``[e1,e2] = l3 e3``.
    """

    brackets: Tuple[float, float, float]
    A: float = 1.0
    B: float = 1.0
    C: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "brackets", tuple(float(b) for b in self.brackets))
        if min(self.A, self.B, self.C) <= 0:
            raise ValueError("A, B, C must be positive")


def _bracket_class(br) -> str:
    nz = [b for b in br if b != 0]
    if not nz:
        return "flat"
    if len(nz) == 1:
        return "nil"
    if len(nz) == 2 and nz[0] * nz[1] < 0:
        return "sol"
    raise UnsupportedBrackets(f"brackets {br} are neither Nil nor Sol type")


def homogeneous_ricci(hs: HomogeneousState):
    """Ricci eigenvalues in the orthonormalized Milnor frame, and scalar curvature."""
    _bracket_class(hs.brackets)
    A, B, C = hs.A, hs.B, hs.C
    l1, l2, l3 = hs.brackets
    L1 = l1 * math.sqrt(A / (B * C))
    L2 = l2 * math.sqrt(B / (A * C))
    L3 = l3 * math.sqrt(C / (A * B))
    m1 = 0.5 * (-L1 + L2 + L3)
    m2 = 0.5 * (L1 - L2 + L3)
    m3 = 0.5 * (L1 + L2 - L3)
    ric = np.array([2 * m2 * m3, 2 * m1 * m3, 2 * m1 * m2])
    return ric, float(ric.sum())


def homogeneous_rhs(hs: HomogeneousState) -> np.ndarray:
    """(dA/dt, dB/dt, dC/dt) under Ricci flow."""
    ric, _ = homogeneous_ricci(hs)
    return -2.0 * np.array([hs.A, hs.B, hs.C]) * ric


# ---------------------------------------------------------------------------
# Gaussian shrinker data on flat space

@dataclass(frozen=True)
class GaussianData:
    """Potential ``f = |x|^2 / 4 tau + c`` on flat R^n.

    ``normalization`` is the additive constant ``(n/2) log(4 pi tau)``; the
    ``normalized`` member includes it, ``f_unnormalized`` omits it.
    """

    n: int
    tau: float
    normalization: float = field(init=False)

    def __post_init__(self):
        if not self.tau > 0:
            raise NonPositiveTau(f"tau must be positive, got {self.tau}")
        object.__setattr__(self, "normalization", 0.5 * self.n * math.log(4 * math.pi * self.tau))

    def f(self, x) -> np.ndarray:
        r2 = np.sum(np.atleast_2d(x) ** 2, axis=-1)
        return r2 / (4 * self.tau) + self.normalization

    def f_unnormalized(self, x) -> np.ndarray:
        r2 = np.sum(np.atleast_2d(x) ** 2, axis=-1)
        return r2 / (4 * self.tau)

    def grad_sq(self, x) -> np.ndarray:
        r2 = np.sum(np.atleast_2d(x) ** 2, axis=-1)
        return r2 / (4 * self.tau**2)

    def laplacian(self) -> float:
        return self.n / (2 * self.tau)

    def f_radial(self, r):
        return np.asarray(r) ** 2 / (4 * self.tau) + self.normalization


def gaussian_data(n: int, tau: float) -> GaussianData:
    return GaussianData(n, tau)


def fd_metric_function(family: MetricFamily) -> Callable[[np.ndarray], np.ndarray]:
    """Metric components as a plain function of the chart point (for finite differences)."""
    return lambda x: sample(family, np.asarray(x, dtype=float)).g
