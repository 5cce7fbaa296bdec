import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from riccilab import entropy as E
from riccilab import flow as F
from riccilab.errors import GridMismatch, NonPositiveTau, NotCompatible, UnsupportedReduction
from riccilab.flat import flat_torus_grid, flat_window
from riccilab.profile import flat_disk_state, flat_torus_state, round_sphere_state


def test_f_on_unit_sphere_with_zero_potential():
    """[DERIVED] F = int R dV = 8 pi on S^2(1)."""
    s = round_sphere_state(1, 64)
    assert E.f_eval(s, np.zeros(64)) == pytest.approx(8 * math.pi, rel=1e-10)


def test_f_on_flat_torus_is_zero():
    """[TRIVIAL]"""
    assert E.f_eval(flat_torus_grid(16), np.zeros((16, 16))) == 0.0


def test_gaussian_f_and_w():
    """[PAPER] flat R^2 Gaussian at tau = 1/2: F = n/2 tau = 2, W = 0."""
    g = flat_window(201, 9.0)
    tau = 0.5
    f = g.radius_sq() / (4 * tau)
    assert E.mass(g, f, tau) == pytest.approx(1.0, abs=1e-8)
    assert E.w_eval(g, f, tau) == pytest.approx(0.0, abs=1e-6)
    fn = E.normalize_potential(g, f)
    assert E.f_eval(g, fn) == pytest.approx(2.0, abs=1e-6)


def test_incompatible_potential_rejected():
    """[TRIVIAL] W needs unit Gaussian mass."""
    s = round_sphere_state(1, 32)
    with pytest.raises(NotCompatible):
        E.w_eval(s, np.zeros(32), 2.0)
    with pytest.raises(NonPositiveTau):
        E.w_eval(s, np.zeros(32), 0.0)
    with pytest.raises(GridMismatch):
        E.f_eval(s, np.zeros(31))


@given(st.floats(0.3, 3.0), st.floats(0.2, 2.0))
def test_w_scale_invariance(lam, tau):
    """[PAPER] W(lam g, f, lam tau) = W(g, f, tau)."""
    s = F.perturbed_surface(48, amp=0.2)
    f = E.normalize_potential(s, 0.3 * np.cos(s.profile.x), tau)
    assert E.w_eval(s.scaled(lam), f, lam * tau) == pytest.approx(E.w_eval(s, f, tau), abs=1e-10)


@given(st.floats(0.3, 3.0))
def test_f_scaling(lam):
    """[DERIVED] F(lam g, f) = lam^{n/2 - 1} F(g, f); on surfaces F is scale invariant."""
    s = F.round_state(3, 32, 0.8)
    f = np.sin(s.profile.x)
    assert E.f_eval(s.scaled(lam), f) == pytest.approx(math.sqrt(lam) * E.f_eval(s, f), rel=1e-11)


# lambda and the spectrum ------------------------------------------------------------

def test_lambda_flat_torus_and_sphere():
    """[PAPER] lambda = 0 on a flat torus and 2/r^2 on S^2(r)."""
    assert E.lambda_eval(flat_torus_state(32, 2 * math.pi)) == pytest.approx(0.0, abs=1e-12)
    assert E.lambda_eval(flat_torus_grid(16)) == 0.0
    for r in (0.5, 1.0, 2.0):
        assert E.lambda_eval(round_sphere_state(1, 64, r)) == pytest.approx(2 / r ** 2, rel=1e-10)


def test_lambda_needs_closed_manifold():
    """[TRIVIAL]"""
    with pytest.raises(UnsupportedReduction):
        E.lambda_eval(flat_disk_state(32, 5.0))


def test_spectrum_torus_and_sphere():
    """[DERIVED] first nonzero -Delta eigenvalue: 1 on the 2 pi torus, 2 on S^2(1)."""
    tor = E.spectrum(flat_torus_state(64, 2 * math.pi), 5)
    assert tor.eigenvalues[0] == pytest.approx(0.0, abs=1e-10)
    assert np.allclose(tor.eigenvalues[1:5], 1.0, atol=1e-3)
    sph = E.spectrum(round_sphere_state(1, 128), 4, ricci_lower=1.0)
    assert np.allclose(sph.eigenvalues[1:4], 2.0, rtol=1e-3)
    assert sph.lichnerowicz_ok and sph.lichnerowicz_bound == 2.0
    grid = E.spectrum(flat_torus_grid(16), 5)
    assert np.allclose(grid.eigenvalues, [0, 1, 1, 1, 1])


def test_rayleigh_quotient_bounds_lambda():
    """[DERIVED] any positive test function gives a quotient >= lambda."""
    s = F.perturbed_surface(64, amp=0.2)
    lam = E.lambda_eval(s)
    rng = np.random.default_rng(3)
    for _ in range(10):
        u = 1 + 0.3 * rng.standard_normal(64)
        assert E.rayleigh_quotient(s, u) >= lam - 1e-12


# mu ------------------------------------------------------------------------------------

def test_mu_on_flat_torus():
    """[DERIVED] mu < 0 for small tau, tends to 0 as tau shrinks, and sits below W of any potential."""
    g = flat_torus_grid(24, 2 * math.pi)
    m_small = E.mu_eval(g, 0.05, restarts=1).mu
    m_large = E.mu_eval(g, 0.3, restarts=1).mu
    assert m_large < m_small < 0
    assert abs(m_small) < 0.1
    f = E.normalize_potential(g, np.zeros(g.shape), 0.3)
    assert m_large <= E.w_eval(g, f, 0.3) + 1e-10


def test_mu_bounded_by_w_on_sphere():
    """[PAPER] mu(g, tau) <= W(g, f, tau) for every compatible f."""
    s = F.perturbed_surface(48, amp=0.2)
    tau = 0.4
    mu = E.mu_eval(s, tau).mu
    for k in range(1, 4):
        f = E.normalize_potential(s, 0.5 * np.cos(k * s.profile.x), tau)
        assert mu <= E.w_eval(s, f, tau) + 1e-10


# conjugate heat flow and monotonicity -------------------------------------------------

def test_conjugate_heat_keeps_constant_on_static_torus():
    """[TRIVIAL] a constant potential on a flat torus stays constant."""
    s0 = flat_torus_state(32, 2 * math.pi)
    states = [s0.with_a(s0.a, t) for t in np.linspace(0, 0.1, 11)]
    run = E.couple(states, np.full(32, 0.7))
    for f in run.fields:
        assert np.allclose(f, 0.7, atol=1e-12)


def test_f_coupled_mass_conserved():
    """[PAPER] int e^{-f} dV is constant under the coupled system."""
    traj = F.run(F.perturbed_surface(48, amp=0.2), F.FlowSettings(t_end=0.05, cadence=0.005))
    run = E.couple(traj, np.zeros(48))
    masses = [E.mass(s, f) for s, f in zip(run.states, run.fields)]
    assert np.ptp(masses) < 1e-10 * masses[0]


def test_f_and_w_monotone_along_surface_flow():
    """[PAPER] F and W are non-decreasing with the derivative identity holding."""
    traj = F.run(F.perturbed_surface(64, amp=0.2), F.FlowSettings(t_end=0.05, cadence=0.0025))
    f_end = traj.states[-1]
    fr = E.couple(traj, 0.2 * np.cos(f_end.profile.x))
    assert E.monotonicity_probe(traj, "F", fr, stride=2).passed
    tau = 0.5
    wr = E.couple(traj, E.normalize_potential(f_end, 0.2 * np.cos(f_end.profile.x), tau), tau)
    assert E.monotonicity_probe(traj, "W", wr, stride=2).passed
    with pytest.raises(ValueError):
        E.monotonicity_probe(traj, "W", fr)


def test_lambda_monotone():
    """[PAPER] lambda increases along the flow."""
    traj = F.run(F.perturbed_surface(48, amp=0.3), F.FlowSettings(t_end=0.1, cadence=0.01))
    rep = E.monotonicity_probe(traj, "lambda")
    assert rep.passed and rep.samples_checked == 10


# first variation ------------------------------------------------------------------------

def _variation(s, seed):
    rng = np.random.default_rng(seed)
    x = s.profile.x
    c = rng.normal(size=3) * 0.5
    V = c[0] + c[1] * np.cos(x) + c[2] * np.cos(2 * x)
    h = 0.3 * np.cos(x) * rng.normal()
    return E.ProfileVariation(V, V, h, sigma=0.2)


def _variation_error(N, seed):
    s = F.perturbed_surface(N, amp=0.2)
    f = 0.2 * np.cos(2 * s.profile.x)
    rep = E.first_variation_check(s, f, _variation(s, seed), [1e-3, 5e-4, 2.5e-4], rel_tol=1e-3)
    d = rep.details
    return rep, abs(d["richardson"][-1] - d["analytic"]) / abs(d["analytic"])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_first_variation_of_f(seed):
    """[DERIVED] analytic delta F matches difference quotients; the gap is O(dx^2)."""
    _, coarse = _variation_error(64, seed)
    rep, fine = _variation_error(128, seed)
    assert rep.passed
    assert rep.details["observed_order"] == pytest.approx(1.0, abs=0.1)
    assert fine < coarse / 3


def test_first_variation_of_w():
    """[DERIVED] the same for W including the tau variation."""
    s = F.perturbed_surface(64, amp=0.2)
    f = E.normalize_potential(s, 0.2 * np.cos(2 * s.profile.x), 0.6)
    assert E.first_variation_check(s, f, _variation(s, 7), [1e-3, 5e-4, 2.5e-4], tau=0.6).passed
