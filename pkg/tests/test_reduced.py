import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from riccilab import flow as F
from riccilab import reduced as RG
from riccilab.errors import SlabOutOfRange, TauOutOfRange
from riccilab.profile import flat_disk_state, round_sphere_state


@pytest.fixture(scope="module")
def flat_bt():
    return RG.BackwardTrajectory.from_state(flat_disk_state(256, 10.0))


@pytest.fixture(scope="module")
def shrinker_bt():
    return RG.BackwardTrajectory(RG.shrinking_sphere_trajectory(3, 128, 0.0, 0.2, 201))


def test_flat_l_length(flat_bt):
    """[PAPER] in flat space L(q, tau_bar) = |q|^2 / 2 sqrt(tau_bar): q = 1, tau_bar = 1 gives 1/2."""
    path = RG.l_geodesic(flat_bt, "pole", 1.0, 1.0)
    assert path.L == pytest.approx(0.5, abs=1e-9)
    assert RG.l_length(path, flat_bt, "s") == pytest.approx(0.5, abs=1e-8)
    assert RG.l_length(path, flat_bt, "tau") == pytest.approx(0.5, abs=1e-8)


def test_trivial_path_has_zero_length(flat_bt):
    """[TRIVIAL] q = p."""
    path = RG.l_geodesic(flat_bt, "pole", 0.0, 0.7)
    assert abs(path.L) < 1e-14


@given(st.floats(0.2, 3.0), st.floats(0.2, 1.5))
def test_flat_l_parabolic_invariance(q, tau_bar):
    """[DERIVED] l(2q, 4 tau_bar) = l(q, tau_bar) on the static flat background."""
    bt = RG.BackwardTrajectory.from_state(flat_disk_state(64, 10.0))
    l1 = RG.l_geodesic(bt, "pole", q, tau_bar, M=64, verify=False).L / (2 * math.sqrt(tau_bar))
    l2 = RG.l_geodesic(bt, "pole", 2 * q, 4 * tau_bar, M=64, verify=False).L / (4 * math.sqrt(tau_bar))
    assert l2 == pytest.approx(l1, abs=1e-8)
    assert l1 == pytest.approx(q * q / (4 * tau_bar), abs=1e-8)


def test_length_forms_agree_on_shrinker(shrinker_bt):
    """[DERIVED] s-form and tau-form quadratures agree on a curved background."""
    path = RG.l_geodesic(shrinker_bt, "pole", 0.6, 0.1)
    assert RG.l_length(path, shrinker_bt, "s") == pytest.approx(path.L, rel=1e-6)
    assert RG.l_length(path, shrinker_bt, "tau") == pytest.approx(path.L, rel=1e-6)


def test_backend_parity(shrinker_bt):
    """[TRIVIAL] python and compiled shooting give the same geodesic."""
    a = RG.l_geodesic(shrinker_bt, "pole", 0.8, 0.15, M=64, backend="python", verify=False)
    b = RG.l_geodesic(shrinker_bt, "pole", 0.8, 0.15, M=64, backend="compiled", verify=False)
    assert a.L == pytest.approx(b.L, rel=1e-12)
    assert np.allclose(a.x, b.x, atol=1e-12)


def test_geodesic_beats_perturbations(shrinker_bt):
    """[PAPER] the shooting solution minimizes L against 200 random competitors."""
    path = RG.l_geodesic(shrinker_bt, "pole", 1.0, 0.15, n_compare=200, seed=5)
    assert path.residual < 1e-8


def test_static_sphere_geodesic_against_brute_force():
    """[DERIVED] static S^2: perturbed paths with the same endpoints are never shorter."""
    bt = RG.BackwardTrajectory.from_state(round_sphere_state(1, 128))
    path = RG.l_geodesic(bt, "pole", 1.2, 0.5, verify=False)
    rng = np.random.default_rng(0)
    base = RG.l_length_many(bt, path.s, path.x[None, :])[0]
    for amp in (0.2, 0.05, 0.01):
        bumps = RG._perturbations(rng, path.s, 50, amp)
        assert RG.l_length_many(bt, path.s, path.x + bumps).min() >= base - 1e-10


def test_tau_out_of_range(shrinker_bt):
    """[TRIVIAL] tau beyond the stored slab is refused."""
    with pytest.raises(TauOutOfRange):
        RG.l_geodesic(shrinker_bt, "pole", 0.5, 0.5)


def test_reduced_volume_below_euclidean(shrinker_bt):
    """[PAPER] tilde V <= (4 pi)^{n/2}, non-increasing in tau."""
    rv = RG.reduced_volume(shrinker_bt, "pole", [0.05, 0.1, 0.15], M=128)
    assert rv.valid.all() and rv.monotone
    assert np.all(rv.values <= (4 * math.pi) ** 1.5 * (1 + 1e-3))


# non-collapsing ----------------------------------------------------------------------

def test_ball_ratio_on_unit_three_sphere():
    """[DERIVED] Vol B(0.5) / 0.5^3 = 8 pi (1 - sin 1) = 3.98427 on S^3(1)."""
    rep = RG.kappa_report(F.round_state(3, 512), "pole", [0.5], kappa=1.0)[0]
    assert rep.ratio == pytest.approx(8 * math.pi * (1 - math.sin(1.0)), rel=1e-5)
    assert rep.admissible and rep.kappa_flag


def test_slab_must_fit_in_trajectory():
    """[TRIVIAL] the backward parabolic slab has to be stored."""
    traj = RG.shrinking_sphere_trajectory(3, 64, 0.0, 0.1, 11)
    with pytest.raises(SlabOutOfRange):
        RG.kappa_report(traj, "pole", [0.5], kappa=0.1, t0=0.1)


def test_inadmissible_near_extinction():
    """[DERIVED] curvature beyond r^-2 makes the ball inadmissible."""
    traj = RG.shrinking_sphere_trajectory(3, 64, 0.0, 0.24, 25)
    rep = RG.kappa_report(traj, "pole", [0.3], kappa=0.1, t0=0.24)[0]
    assert not rep.admissible and rep.kappa_flag is None
