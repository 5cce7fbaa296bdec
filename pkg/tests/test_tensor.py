import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from riccilab import geometries as G
from riccilab import tensor as T
from riccilab.errors import NonPositiveDefinite, NonSymmetricMetric


def polynomial_sample(seed, d):
    """Metric P + Q.x + x.S.x/2 at x = 0: exact partials of a random analytic family."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    P = A @ A.T + d * np.eye(d)
    Q = rng.normal(size=(d, d, d)) * 0.5
    Q = 0.5 * (Q + Q.transpose(0, 2, 1))
    S = rng.normal(size=(d, d, d, d)) * 0.5
    S = 0.5 * (S + S.transpose(0, 1, 3, 2))
    S = 0.5 * (S + S.transpose(1, 0, 2, 3))
    return T.MetricSample(P, Q, S)


def sphere2_sample(theta):
    g = np.diag([1.0, math.sin(theta) ** 2])
    dg = np.zeros((2, 2, 2))
    dg[0, 1, 1] = 2 * math.sin(theta) * math.cos(theta)
    d2g = np.zeros((2, 2, 2, 2))
    d2g[0, 0, 1, 1] = 2 * math.cos(2 * theta)
    return T.MetricSample(g, dg, d2g)


# christoffel ---------------------------------------------------------------

def test_flat_christoffel_zero():
    """[TRIVIAL] constant metric."""
    m = T.MetricSample(np.eye(3), np.zeros((3, 3, 3)), np.zeros((3, 3, 3, 3)))
    assert np.all(T.christoffel(m) == 0)


def test_sphere_christoffel_values():
    """[DERIVED] diag(1, sin^2) at theta = pi/4, analytic and finite-difference partials."""
    m = sphere2_sample(math.pi / 4)
    gam = T.christoffel(m)
    assert gam[0, 1, 1] == pytest.approx(-0.5, abs=1e-14)
    assert gam[1, 0, 1] == pytest.approx(1.0, abs=1e-14)
    fd = T.fd_sample(lambda x: np.diag([1.0, math.sin(x[0]) ** 2]), [math.pi / 4, 0.3])
    assert np.allclose(T.christoffel(fd), gam, atol=1e-9)


def test_cigar_christoffel_zero_at_origin():
    """[TRIVIAL] critical point of the conformal factor."""
    m = G.sample(G.cigar(), [0.0, 0.0])
    assert np.allclose(T.christoffel(m), 0, atol=1e-15)


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_christoffel_symmetric(seed, d):
    """[TRIVIAL] torsion-free connection."""
    gam = T.christoffel(polynomial_sample(seed, d))
    assert np.allclose(gam, gam.transpose(0, 2, 1), atol=1e-12)


# curvature -----------------------------------------------------------------

@pytest.mark.parametrize("n,r", [(2, 1.0), (2, 2.0), (3, 1.0), (3, 0.7)])
def test_round_sphere_scalar(n, r):
    """[PAPER] R = n(n-1)/r^2 (r = 2, n = 2 gives 0.5)."""
    p = [1.1] * (n - 1) + [0.4]
    b = T.curvature(G.sample(G.sphere(n, r), p))
    assert b.scalar == pytest.approx(n * (n - 1) / r ** 2, abs=1e-10)


def test_cigar_scalar():
    """[DERIVED] R = 4/(1 + r^2) for the cigar."""
    for x, y in [(0, 0), (1, 0), (0.5, -1.2), (2, 2)]:
        b = T.curvature(G.sample(G.cigar(), [x, y]))
        assert b.scalar == pytest.approx(4 / (1 + x * x + y * y), abs=1e-10)


def test_flat_torus_zero_curvature():
    """[TRIVIAL]"""
    b = T.curvature(G.sample(G.MetricFamily("torus", 3, (2.0,)), [0.1, 0.2, 0.3]))
    assert np.all(b.riemann == 0) and b.scalar == 0


def test_unit_three_sphere_alpha_is_two():
    """[DERIVED] convention: unit S^3 has doubled curvature-operator eigenvalues (2, 2, 2)."""
    b = T.curvature(G.sample(G.sphere(3, 1.0), [0.9, 1.3, 0.2]))
    assert np.allclose(b.alpha, 2.0, atol=1e-10)
    assert b.scalar == pytest.approx(b.alpha.sum())


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_riemann_symmetries_and_bianchi(seed, d):
    """[DERIVED] index symmetries and first Bianchi on random analytic metrics."""
    b = T.curvature(polynomial_sample(seed, d))
    R = b.riemann
    assert np.allclose(R, -R.transpose(1, 0, 2, 3), atol=1e-9)
    assert np.allclose(R, -R.transpose(0, 1, 3, 2), atol=1e-9)
    assert np.allclose(R, R.transpose(2, 3, 0, 1), atol=1e-9)
    bianchi = R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3)
    assert np.max(np.abs(bianchi)) < 1e-9


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_trace_consistency(seed, d):
    """[TRIVIAL] R = g^ij Ric_ij."""
    m = polynomial_sample(seed, d)
    b = T.curvature(m)
    assert b.scalar == pytest.approx(float(np.einsum("ij,ij->", m.g_inv, b.ricci)), abs=1e-10)


def test_finite_difference_oracle_converges():
    """[DERIVED] FD partials converge at second order (>= 3.5x per halving)."""
    fam = G.sphere(3, 1.3)
    p = np.array([0.8, 1.1, 0.5])
    exact = T.curvature(G.sample(fam, p)).riemann
    metric = G.fd_metric_function(fam)
    errs = [np.max(np.abs(T.curvature(T.fd_sample(metric, p, h)).riemann - exact)) for h in (2e-2, 1e-2)]
    assert errs[0] / errs[1] >= 3.5


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_conformal_surface_formula(x, y, a, b):
    """[DERIVED] g = e^{2u} delta: R = -2 e^{-2u} flat-Laplacian(u), u = a x^2 + b x y."""
    u = a * x * x + b * x * y
    ux, uy = 2 * a * x + b * y, b * x
    e = math.exp(2 * u)
    g = e * np.eye(2)
    dg = np.zeros((2, 2, 2))
    dg[0] = 2 * ux * g
    dg[1] = 2 * uy * g
    uxx, uxy, uyy = 2 * a, b, 0.0
    H = np.array([[uxx, uxy], [uxy, uyy]])
    grad = np.array([ux, uy])
    d2g = np.zeros((2, 2, 2, 2))
    for k in range(2):
        for l in range(2):
            d2g[k, l] = (2 * H[k, l] + 4 * grad[k] * grad[l]) * g
    R = T.curvature(T.MetricSample(g, dg, d2g)).scalar
    assert R == pytest.approx(-2 * math.exp(-2 * u) * (uxx + uyy), abs=1e-8)


def test_einstein_relation_on_spheres():
    """[PAPER] Ric = (n-1)/r^2 g."""
    for n, r in [(2, 1.5), (3, 0.8)]:
        m = G.sample(G.sphere(n, r), [1.0] * (n - 1) + [0.3])
        b = T.curvature(m)
        assert np.allclose(b.ricci, (n - 1) / r ** 2 * m.g, atol=1e-9)


def test_rejects_bad_metrics():
    """[TRIVIAL] fail loudly on caller bugs."""
    with pytest.raises(NonSymmetricMetric):
        T.MetricSample(np.array([[1.0, 0.2], [0.0, 1.0]]), np.zeros((2, 2, 2)))
    with pytest.raises(NonPositiveDefinite):
        T.MetricSample(np.diag([1.0, -1.0]), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        T.curvature(T.MetricSample(np.eye(2), np.zeros((2, 2, 2))))


# hessian / laplacian ---------------------------------------------------------

def test_hessian_of_constant():
    """[TRIVIAL]"""
    hess, lap = T.hessian_laplacian(sphere2_sample(1.0), np.zeros(2), np.zeros((2, 2)))
    assert np.all(hess == 0) and lap == 0


def test_gaussian_laplacian():
    """[PAPER] Delta |x|^2/4 tau = n/2 tau = 2 at tau = 0.5."""
    m = G.sample(G.flat(2), [0.3, -0.7])
    x = np.array([0.3, -0.7])
    hess, lap = T.hessian_laplacian(m, x, np.eye(2))  # f = |x|^2 / 2
    assert lap == pytest.approx(2.0)


def test_first_harmonic_laplacian():
    """[DERIVED] Delta cos(theta) = -2 cos(theta) on the unit sphere."""
    th = math.pi / 3
    _, lap = T.hessian_laplacian(sphere2_sample(th), [-math.sin(th), 0], [[-math.cos(th), 0], [0, 0]])
    assert lap == pytest.approx(-1.0, abs=1e-12)


# variation responses -----------------------------------------------------------

def _const_variation(v):
    d = v.shape[0]
    return T.VariationField(v, np.zeros((d, d, d)), np.zeros((d, d, d, d)))


def test_zero_variation():
    """[TRIVIAL]"""
    dR, dV, dG = T.variation_responses(sphere2_sample(0.9), _const_variation(np.zeros((2, 2))))
    assert dR == 0 and dV == 0 and np.all(dG == 0)


def test_conformal_variation_on_flat():
    """[TRIVIAL] v = c g: delta R = 0 and the volume factor is c d/2."""
    m = G.sample(G.flat(3), [0.1, 0.2, 0.3])
    dR, dV, _ = T.variation_responses(m, _const_variation(0.7 * np.eye(3)))
    assert dR == pytest.approx(0.0, abs=1e-14)
    assert dV == pytest.approx(0.7 * 3 / 2)


def test_ricci_direction_volume_factor():
    """[PAPER] v = -2 Ric on S^2(1): dV changes by -R = -2."""
    m = sphere2_sample(1.2)
    b = T.curvature(m)
    dg = -2 * m.dg  # Ric = g on the unit sphere, so v = -2 g with these partials
    d2g = -2 * m.d2g
    dR, dV, _ = T.variation_responses(m, T.VariationField(-2 * b.ricci, dg, d2g))
    assert dV == pytest.approx(-2.0, abs=1e-12)
    # v = -2g rescales the metric, so delta R = 2R
    assert dR == pytest.approx(4.0, abs=1e-9)
