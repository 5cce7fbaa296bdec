"""Pointwise Riemannian geometry from metric components in a chart.

Index conventions
-----------------
``dg[k, i, j]`` is the partial of ``g_ij`` in direction ``k`` and
``d2g[k, l, i, j]`` the mixed second partial.  ``gamma[k, i, j]`` is the
Christoffel symbol with upper index ``k``.

The curvature tensor is stored so that ``riemann[i, j, i, j]`` is the
(unnormalized) sectional curvature of the coordinate plane ``(i, j)``:
positive on round spheres.  Ricci is the contraction
``ric[i, k] = g^{jl} riemann[i, j, k, l]``.  In dimension 3 the curvature
operator eigenvalues are scaled so that the unit 3-sphere has
``alpha = (2, 2, 2)``; sectional curvatures are then ``alpha / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonPositiveDefinite, NonSymmetricMetric

_SYM_TOL = 1e-12


def _check_metric(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] not in (1, 2, 3):
        raise ValueError(f"metric must be d x d with d in 1..3, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise NonPositiveDefinite("metric has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(g))))
    if np.max(np.abs(g - g.T)) > _SYM_TOL * scale:
        raise NonSymmetricMetric("metric matrix is not symmetric")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite("metric is not positive definite") from None
    return g


@dataclass(frozen=True)
class ChartPoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if c.ndim != 1 or not 1 <= c.size <= 3 or not np.all(np.isfinite(c)):
            raise ValueError("chart point needs 1..3 finite coordinates")
        object.__setattr__(self, "coords", c)


@dataclass(frozen=True)
class MetricSample:
    """Metric components and partials at one chart point."""

    g: np.ndarray
    dg: np.ndarray
    d2g: Optional[np.ndarray] = None
    g_inv: np.ndarray = field(init=False)

    def __post_init__(self):
        g = _check_metric(self.g)
        d = g.shape[0]
        dg = np.asarray(self.dg, dtype=float).reshape(d, d, d)
        if np.max(np.abs(dg - dg.transpose(0, 2, 1)), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(dg), initial=0)):
            raise NonSymmetricMetric("first partials not symmetric in metric indices")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "dg", dg)
        if self.d2g is not None:
            d2g = np.asarray(self.d2g, dtype=float).reshape(d, d, d, d)
            object.__setattr__(self, "d2g", d2g)
        object.__setattr__(self, "g_inv", np.linalg.inv(g))

    @property
    def dim(self) -> int:
        return self.g.shape[0]


@dataclass(frozen=True)
class CurvatureBundle:
    gamma: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    sectional: np.ndarray
    alpha: Optional[np.ndarray]


@dataclass(frozen=True)
class VariationField:
    """Metric variation ``v`` (with partials) and potential variation ``h``."""

    v: np.ndarray
    dv: np.ndarray
    d2v: np.ndarray
    h: float = 0.0

    def trace_v(self, m: MetricSample) -> float:
        return float(np.einsum("ij,ij->", m.g_inv, self.v))


def _gamma_parts(g_inv, dg):
    # S[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    S = np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
    return 0.5 * np.einsum("kl,lij->kij", g_inv, S), S


def _dgamma(g_inv, dg, d2g):
    """dgamma[m, k, i, j] = partial_m of gamma[k, i, j]."""
    _, S = _gamma_parts(g_inv, dg)
    dS = np.einsum("mijl->mlij", d2g) + np.einsum("mjil->mlij", d2g) - d2g
    dginv = -np.einsum("ka,mab,bl->mkl", g_inv, dg, g_inv)
    return 0.5 * (np.einsum("mkl,lij->mkij", dginv, S)
                  + np.einsum("kl,mlij->mkij", g_inv, dS))


def christoffel(m: MetricSample) -> np.ndarray:
    gamma, _ = _gamma_parts(m.g_inv, m.dg)
    return gamma


def _curvature_arrays(g, g_inv, dg, d2g):
    gamma, _ = _gamma_parts(g_inv, dg)
    dgamma = _dgamma(g_inv, dg, d2g)
    # Rup[l, i, j, k]: component l of R(d_i, d_j) d_k
    Rup = (np.einsum("iljk->lijk", dgamma) - np.einsum("jlik->lijk", dgamma)
           + np.einsum("lim,mjk->lijk", gamma, gamma)
           - np.einsum("ljm,mik->lijk", gamma, gamma))
    riem = np.einsum("km,mijl->ijkl", g, Rup)
    ric = np.einsum("jl,ijkl->ik", g_inv, riem)
    return gamma, riem, ric


def _frame(g: np.ndarray) -> np.ndarray:
    """Columns form a g-orthonormal frame."""
    L = np.linalg.cholesky(g)
    return np.linalg.inv(L).T


_PAIRS = {1: [], 2: [(0, 1)], 3: [(1, 2), (2, 0), (0, 1)]}


def curvature_operator_eigenvalues(g: np.ndarray, riem: np.ndarray) -> np.ndarray:
    E = _frame(g)
    Rf = np.einsum("ijkl,ia,jb,kc,ld->abcd", riem, E, E, E, E)
    pairs = _PAIRS[g.shape[0]]
    M = np.array([[Rf[a, b, c, d] for (c, d) in pairs] for (a, b) in pairs])
    return 2.0 * np.linalg.eigvalsh(0.5 * (M + M.T))


def curvature(m: MetricSample) -> CurvatureBundle:
    if m.d2g is None:
        raise ValueError("curvature needs second partials")
    gamma, riem, ric = _curvature_arrays(m.g, m.g_inv, m.dg, m.d2g)
    ric = 0.5 * (ric + ric.T)
    scalar = float(np.einsum("ij,ij->", m.g_inv, ric))
    d = m.dim
    sec = []
    for i in range(d):
        for j in range(i + 1, d):
            area = m.g[i, i] * m.g[j, j] - m.g[i, j] ** 2
            sec.append(riem[i, j, i, j] / area)
    alpha = curvature_operator_eigenvalues(m.g, riem) if d == 3 else None
    return CurvatureBundle(gamma, riem, ric, scalar, np.array(sec), alpha)


def hessian_laplacian(m: MetricSample, df, d2f):
    """Covariant Hessian and Laplace-Beltrami value of a scalar with the given partials."""
    df = np.asarray(df, dtype=float).reshape(m.dim)
    d2f = np.asarray(d2f, dtype=float).reshape(m.dim, m.dim)
    hess = d2f - np.einsum("kij,k->ij", christoffel(m), df)
    hess = 0.5 * (hess + hess.T)
    return hess, float(np.einsum("ij,ij->", m.g_inv, hess))


def variation_responses(m: MetricSample, w: VariationField):
    """Linear responses of scalar curvature, volume factor and Christoffels to ``v``.

    ``delta_R = -Lap(tr v) + div div v - <Ric, v>``; the volume form changes by
    ``(tr v / 2) dV``.
    """
    d = m.dim
    gi = m.g_inv
    v = np.asarray(w.v, dtype=float).reshape(d, d)
    dv = np.asarray(w.dv, dtype=float).reshape(d, d, d)
    d2v = np.asarray(w.d2v, dtype=float).reshape(d, d, d, d)
    gamma, riem, ric = _curvature_arrays(m.g, gi, m.dg, m.d2g)
    dgamma = _dgamma(gi, m.dg, m.d2g)
    # first covariant derivative: Dv[k, i, j] = nabla_k v_ij
    Dv = dv - np.einsum("mki,mj->kij", gamma, v) - np.einsum("mkj,im->kij", gamma, v)
    # partial_l of Dv
    dDv = (d2v
           - np.einsum("lmki,mj->lkij", dgamma, v) - np.einsum("mki,lmj->lkij", gamma, dv)
           - np.einsum("lmkj,im->lkij", dgamma, v) - np.einsum("mkj,lim->lkij", gamma, dv))
    DDv = (dDv - np.einsum("mlk,mij->lkij", gamma, Dv)
           - np.einsum("mli,kmj->lkij", gamma, Dv)
           - np.einsum("mlj,kim->lkij", gamma, Dv))
    lap_tr = np.einsum("ab,ij,abij->", gi, gi, DDv)
    divdiv = np.einsum("ia,jb,ijab->", gi, gi, DDv)
    ric_v = np.einsum("ia,jb,ab,ij->", gi, gi, ric, v)
    delta_R = float(-lap_tr + divdiv - ric_v)
    delta_dv = 0.5 * float(np.einsum("ij,ij->", gi, v))
    delta_gamma = 0.5 * np.einsum("kl,ijl->kij", gi,
                                  Dv.transpose(0, 1, 2) + Dv.transpose(1, 0, 2)
                                  - np.einsum("lij->ijl", Dv))
    return delta_R, delta_dv, delta_gamma


def fd_sample(metric: Callable[[np.ndarray], np.ndarray], x, h: float = 1e-5) -> MetricSample:
    """MetricSample with central finite-difference partials of ``metric`` at ``x``."""
    x = np.asarray(x, dtype=float)
    d = x.size
    g0 = np.asarray(metric(x), dtype=float)
    dg = np.zeros((d, d, d))
    d2g = np.zeros((d, d, d, d))
    E = np.eye(d) * h
    for k in range(d):
        gp, gm = metric(x + E[k]), metric(x - E[k])
        dg[k] = (gp - gm) / (2 * h)
        d2g[k, k] = (gp - 2 * g0 + gm) / h**2
        for l in range(k + 1, d):
            val = (metric(x + E[k] + E[l]) - metric(x + E[k] - E[l])
                   - metric(x - E[k] + E[l]) + metric(x - E[k] - E[l])) / (4 * h * h)
            d2g[k, l] = d2g[l, k] = val
    return MetricSample(g0, dg, d2g)
