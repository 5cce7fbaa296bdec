import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from riccilab import geometries as G
from riccilab import tensor as T
from riccilab.errors import BeyondExtinction, NonPositiveTau, OutOfChart, UnsupportedBrackets


def test_flat_sample_identity():
    """[TRIVIAL]"""
    m = G.sample(G.flat(3), [1.0, 2.0, 3.0])
    assert np.all(m.g == np.eye(3)) and np.all(m.dg == 0)


def test_cigar_sample_at_unit_radius():
    """[PAPER] (dx^2+dy^2)/(1+x^2+y^2) at (1, 0)."""
    assert np.allclose(G.sample(G.cigar(), [1.0, 0.0]).g, np.eye(2) / 2)


def test_sol_sample():
    """[PAPER] e^{2z}dx^2 + e^{-2z}dy^2 + dz^2 at z = 1."""
    m = G.sample(G.MetricFamily("sol", 3), [0.0, 0.0, 1.0])
    assert np.allclose(m.g, np.diag([math.e ** 2, math.e ** -2, 1.0]))


def test_sphere_chart_rejects_poles():
    """[TRIVIAL] polar angles must avoid 0 and pi."""
    with pytest.raises(OutOfChart):
        G.sample(G.sphere(2), [0.0, 1.0])


def test_fixed_dimensions():
    """[TRIVIAL]"""
    with pytest.raises(ValueError):
        G.MetricFamily("cigar", 3)
    with pytest.raises(ValueError):
        G.MetricFamily("sphere", 2, (-1.0,))


def test_sphere_exact_flow():
    """[PAPER] n = 3, r0 = 1: T = 0.25 and r(0.125) = sqrt(0.5)."""
    fam = G.sphere(3, 1.0)
    ex = G.exact_flow(fam, 0.125)
    assert ex.extinction_time == pytest.approx(0.25)
    assert ex.family.radius == pytest.approx(math.sqrt(0.5))
    with pytest.raises(BeyondExtinction):
        G.exact_flow(fam, 0.25)


def test_hyperbolic_exact_flow():
    """[PAPER] r(t) = sqrt(r0^2 + 2(n-1)t): n = 2, t = 1.5 gives 2."""
    assert G.exact_flow(G.hyperbolic(2, 1.0), 1.5).family.radius == pytest.approx(2.0)


def test_einstein_scale_matches_sphere():
    """[PAPER] rho^2 = 1 - 2 lambda t with lambda = 2 for the unit 3-sphere."""
    assert G.einstein_scale(2.0, 0.1) == pytest.approx(G.exact_flow(G.sphere(3), 0.1).scale)
    assert G.einstein_scale(2.0, 0.25) == pytest.approx(0.0)


@pytest.mark.parametrize("n", [2, 3])
def test_sphere_radius_ode(n):
    """[PAPER] d(r^2)/dt = -2(n-1)."""
    h = 1e-6
    r2 = [G.exact_flow(G.sphere(n, 1.3), t).family.radius ** 2 for t in (0.05 - h, 0.05 + h)]
    assert (r2[1] - r2[0]) / (2 * h) == pytest.approx(-2 * (n - 1), abs=1e-8)


def test_cigar_is_steady():
    """[PAPER] the maximum R = 4 at the origin is invariant in time."""
    for t in (0.0, 0.3, 1.0):
        fam = G.exact_flow(G.cigar(), t).family
        assert T.curvature(G.sample(fam, [0.0, 0.0])).scalar == pytest.approx(4.0)


def test_homogeneous_scalars():
    """[DERIVED] Nil -1/2, Sol -2, flat 0; agree with coordinate curvature."""
    _, R = G.homogeneous_ricci(G.HomogeneousState(G.NIL_BRACKETS))
    assert R == pytest.approx(-0.5)
    assert T.curvature(G.sample(G.MetricFamily("nil", 3), [0.3, -0.2, 0.1])).scalar == pytest.approx(-0.5)
    _, R = G.homogeneous_ricci(G.HomogeneousState(G.SOL_BRACKETS))
    assert R == pytest.approx(-2.0)
    assert T.curvature(G.sample(G.MetricFamily("sol", 3), [0.3, -0.2, 0.1])).scalar == pytest.approx(-2.0)
    ric, R = G.homogeneous_ricci(G.HomogeneousState(G.FLAT_BRACKETS))
    assert np.all(ric == 0) and R == 0


def test_unsupported_brackets():
    """[TRIVIAL] only Nil/Sol/flat triples."""
    with pytest.raises(UnsupportedBrackets):
        G.homogeneous_ricci(G.HomogeneousState((1.0, 1.0, 1.0)))


def test_gaussian_data_examples():
    """[PAPER] |grad f|^2 = |x|^2/4 tau^2 and Delta f = n/2 tau."""
    gd = G.gaussian_data(2, 0.5)
    assert gd.grad_sq(np.array([1.0, 0.0]))[0] == pytest.approx(1.0)
    assert gd.laplacian() == pytest.approx(2.0)
    with pytest.raises(NonPositiveTau):
        G.gaussian_data(2, 0.0)


@pytest.mark.parametrize("n,tau", [(1, 0.3), (2, 0.5), (3, 1.7)])
def test_gaussian_normalization(n, tau):
    """[DERIVED] radial quadrature to 12 sqrt(tau) integrates to 1."""
    gd = G.gaussian_data(n, tau)
    area = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}[n]
    val, _ = integrate.quad(lambda r: area * r ** (n - 1) * math.exp(-gd.f_radial(r)), 0, 12 * math.sqrt(tau),
                            epsabs=1e-14, epsrel=1e-13)
    assert val == pytest.approx(1.0, abs=1e-9)


FAMILIES = [G.flat(2), G.flat(3), G.sphere(2, 1.3), G.sphere(3, 0.8), G.hyperbolic(2, 1.0),
            G.hyperbolic(3, 2.0), G.cigar(), G.cigar(0.2)]


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f"{f.kind.value}{f.dim}")
def test_closed_forms_at_random_points(fam):
    """[DERIVED] tensor-core curvature equals the family's closed form at 50 random points."""
    rng = np.random.default_rng(11)
    for _ in range(50):
        if fam.kind in (G.Kind.SPHERE,):
            p = np.r_[rng.uniform(0.1, math.pi - 0.1, fam.dim - 1), rng.uniform(0, 2 * math.pi)]
        elif fam.kind is G.Kind.HYPERBOLIC:
            p = np.r_[rng.uniform(0.1, 3.0), rng.uniform(0.1, math.pi - 0.1, fam.dim - 2), rng.uniform(0, 6)]
        else:
            p = rng.uniform(-2, 2, fam.dim)
        assert T.curvature(G.sample(fam, p)).scalar == pytest.approx(G.closed_form_scalar(fam, p), abs=1e-8)


@given(st.floats(0.2, 3.0), st.floats(0.0, 0.2))
def test_sphere_family_scaling(r, frac):
    """[PAPER] the exact flow stays round: R(t) = n(n-1)/r(t)^2."""
    fam = G.sphere(3, r)
    t = frac * G.extinction_time(fam)
    ex = G.exact_flow(fam, t)
    b = T.curvature(G.sample(ex.family, [1.0, 1.0, 0.5]))
    assert b.scalar == pytest.approx(6 / (r * r - 4 * t), rel=1e-9)
