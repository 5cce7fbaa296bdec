"""The fifteen acceptance criteria, each at its stated tolerance and time budget.

Every test records one ``[ACC nn] PASS|FAIL`` line; the lines are repeated
in the pytest terminal summary.  Run standalone with
``pytest tests/test_acceptance.py -v``.
"""
import math
import time

import numpy as np
import pytest

from riccilab import entropy as E
from riccilab import flow as F
from riccilab import geometries as G
from riccilab import reduced as RG
from riccilab import verifiers as V
from riccilab.config import parse_config
from riccilab.flat import flat_torus_grid, flat_window
from riccilab.profile import Profile, WarpedState, flat_disk_state, round_sphere_state
from riccilab.runner import execute

GOLDEN = """
[[scenario]]
id = "sphere3_extinction"
family = "sphere"
params = { n = 3, r = 1.0 }
N = 128
t_end = 0.3
outputs = { cadence = 0.025 }
checks = [
  { name = "status", status = ["Extinct"] },
  { name = "extinction_time", expected = 0.25, tolerance = 0.0025 },
  { name = "scalar_barrier", tolerance = 1e-6 },
  { name = "hamilton_ivey", tolerance = 1e-6 },
]

[[scenario]]
id = "gaussian_entropy"
family = "gaussian"
params = { n = 2, half_width = 8.0 }
N = 257
entropy = { tau = 0.5, quantities = ["F", "W"], tau_list = [0.5] }
checks = [
  { name = "expect", quantity = "entropy.F", expected = 2.0, tolerance = 2e-3 },
  { name = "expect", quantity = "entropy.W", expected = 0.0, tolerance = 1e-3 },
]

[[scenario]]
id = "flat_reduced_volume"
family = "flat_disk"
params = { radius = 10.0 }
N = 256
t_end = 0.0
reduced = { tau_list = [0.5, 1.0, 2.0], M = 256 }
checks = [
  { name = "expect", quantity = "reduced.V_tilde", expected = 12.566370614359172, relative = true, tolerance = 5e-3 },
]
"""


class Clock:
    def __init__(self, budget):
        self.budget, self.t0 = budget, time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.t0

    @property
    def ok(self):
        return self.elapsed < self.budget


def _report(record, num, name, ok, detail, clock):
    ok = bool(ok and clock.ok)
    record(f"[ACC {num:02d}] {'PASS' if ok else 'FAIL'} {name}: {detail} ({clock.elapsed:.1f}s / {clock.budget:g}s)")
    return ok


def test_01_sphere_extinction(acceptance_line):
    """[PAPER] T = 1/(2(n-1)) = 0.25 for the unit 3-sphere."""
    c = Clock(30)
    tr = F.run(F.round_state(3, 256, 1.0), F.FlowSettings(t_end=0.3))
    T = tr.extinction_time
    ok = tr.status == "Extinct" and T is not None and 0.2475 <= T <= 0.2525
    assert _report(acceptance_line, 1, "sphere extinction", ok, f"T={T!r} status={tr.status}", c)


def test_02_surface_curvature_law(acceptance_line):
    """[PAPER] R(t) = 2/(1-2t) on the shrinking unit 2-sphere."""
    c = Clock(10)
    tr = F.run(F.round_state(2, 256, 1.0), F.FlowSettings(t_end=0.2, cadence=0.2))
    R = tr.states[-1].scalar()
    exact = 2 / (1 - 2 * 0.2)
    err = float(np.max(np.abs(R - exact))) / exact
    assert _report(acceptance_line, 2, "surface curvature law", err <= 5e-3 and abs(tr.states[-1].t - 0.2) < 1e-12,
                   f"max rel err {err:.2e}", c)


def test_03_gaussian_F(acceptance_line):
    """[PAPER] F = n/2T for the Gaussian soliton potential."""
    c = Clock(5)
    g = flat_window(257, 8.0, 2)
    f = G.gaussian_data(2, 0.5).f(g.points().reshape(-1, 2)).reshape(g.shape)
    val = E.f_eval(g, f)
    assert _report(acceptance_line, 3, "Gaussian F", abs(val - 2.0) <= 2e-3, f"F={val:.10f}", c)


def test_04_gaussian_W(acceptance_line):
    """[PAPER] W = 0 for f = |x|^2/4 tau on flat space."""
    c = Clock(5)
    g = flat_window(257, 8.0, 2)
    pts = g.points().reshape(-1, 2)
    vals = []
    for tau in (0.3, 0.7):
        f = G.gaussian_data(2, tau).f_unnormalized(pts).reshape(g.shape)
        vals.append(E.w_eval(g, f, tau))
    worst = max(abs(v) for v in vals)
    assert _report(acceptance_line, 4, "Gaussian W shrinker", worst <= 1e-3, f"max|W|={worst:.2e}", c)


def random_compatible_potential(g, rng):
    """Anisotropic quadratic plus bounded smooth modes, normalized to unit weighted mass."""
    tau = rng.uniform(0.3, 1.0)
    th = rng.uniform(0, math.pi)
    Q = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    A = Q @ np.diag(rng.uniform(0.6, 1.6, 2)) @ Q.T
    x, y = g.coords()
    shift = rng.uniform(-1, 1, 2)
    X, Y = x - shift[0], y - shift[1]
    f = (A[0, 0] * X * X + 2 * A[0, 1] * X * Y + A[1, 1] * Y * Y) / (4 * tau)
    for _ in range(3):
        k = rng.normal(0, 1.0, 2)
        f = f + rng.uniform(-0.5, 0.5) * np.sin(k[0] * x + k[1] * y + rng.uniform(0, 2 * math.pi))
    return E.normalize_potential(g, f, tau), tau


def test_05_flat_log_sobolev(acceptance_line):
    """[PAPER] W >= 0 on flat space for every compatible f (50 random samples)."""
    c = Clock(60)
    g = flat_window(257, 8.0, 2)
    rng = np.random.default_rng(2024)
    ws = []
    for _ in range(50):
        f, tau = random_compatible_potential(g, rng)
        ws.append(E.w_eval(g, f, tau))
    worst = min(ws)
    assert _report(acceptance_line, 5, "flat log-Sobolev", worst >= -1e-3, f"min W={worst:.3e} over 50", c)


def test_06_lambda_round_sphere(acceptance_line):
    """[DERIVED] lambda(S^2(1)) = 2 and dlambda/dt = 4 under the exact shrinking flow."""
    c = Clock(10)
    s = round_sphere_state(1, 256)
    lam = E.lambda_eval(s)
    h = 1e-4
    fd = (E.lambda_eval(round_sphere_state(1, 256, math.sqrt(1 - 2 * h)))
          - E.lambda_eval(round_sphere_state(1, 256, math.sqrt(1 + 2 * h)))) / (2 * h)
    quad = E.eigenvalue_rate(s, 1)
    ok = abs(lam - 2) <= 2e-3 and abs(fd - 4) <= 0.04 and abs(quad - 4) <= 0.04
    assert _report(acceptance_line, 6, "lambda on round sphere", ok,
                   f"lambda={lam:.6f} dlambda/dt fd={fd:.5f} quadrature={quad:.5f}", c)


def test_07_first_variation_F(acceptance_line):
    """[DERIVED] analytic delta F against Richardson-extrapolated difference quotients."""
    c = Clock(10)
    s = round_sphere_state(1, 256)
    x = s.profile.x
    v = 0.05 * np.cos(x)
    rep = E.first_variation_check(s, 0.1 * np.cos(x), E.ProfileVariation(v, v, np.zeros_like(x)),
                                  [1e-3, 5e-4, 2.5e-4, 1.25e-4], rel_tol=1e-4)
    order = rep.details["observed_order"]
    rel = max(abs(r - rep.details["analytic"]) for r in rep.details["richardson"]) / abs(rep.details["analytic"])
    ok = rep.passed and abs(order - 1) < 0.1
    assert _report(acceptance_line, 7, "delta F first variation", ok,
                   f"rel err {rel:.2e}, observed order {order:.3f}", c)


def test_08_F_monotonicity_identity(acceptance_line):
    """[DERIVED] dF/dt = 2 int |Ric + Hess f|^2 e^-f dV along a coupled perturbed-sphere run."""
    c = Clock(60)
    tr = F.run(F.perturbed_surface(128), F.FlowSettings(t_end=0.1, record_every_step=True))
    st = tr.states
    cr = E.couple(tr, E.normalize_potential(st[-1], np.zeros(128)))
    rep = E.monotonicity_probe(tr, "F", cr, rel_tol=5e-3, stride=max(1, len(st) // 20))
    worst = max(e[3] for e in rep.details["identity"])
    assert _report(acceptance_line, 8, "F monotonicity identity", rep.passed,
                   f"worst rel identity err {worst:.2e} at {len(rep.details['identity'])} times", c)


def test_09_conjugate_mass(acceptance_line):
    """[PAPER] int e^-f dV is conserved by the coupled equation (>= 10^3 steps)."""
    c = Clock(30)
    tr = F.run(F.round_state(2, 128), F.FlowSettings(t_end=0.2, record_every_step=True))
    st = tr.states
    x = st[-1].profile.x
    cr = E.couple(tr, E.normalize_potential(st[-1], 0.3 * np.cos(x)))
    drift = max(abs(E.mass(s, f) - 1) for s, f in zip(st, cr.fields))
    ok = len(st) - 1 >= 1000 and drift <= 1e-6
    assert _report(acceptance_line, 9, "conjugate mass conservation", ok,
                   f"{len(st) - 1} steps, max|mass-1|={drift:.2e}", c)


def test_10_flat_reduced_geometry(acceptance_line):
    """[PAPER] l = |q-p|^2/4 tau, V = 4 pi constant in tau, identities with equality."""
    c = Clock(30)
    bt = RG.BackwardTrajectory.from_state(flat_disk_state(512, 10.0))
    lf = RG.reduced_distance_field(bt, "pole", 1.0)
    inside = lf.x < 6.0
    l_err = float(np.max(np.abs(lf.l[inside] - lf.x[inside] ** 2 / 4)))
    rv = RG.reduced_volume(bt, "pole", [0.5, 1.0, 2.0])
    v_err = float(np.max(np.abs(rv.values / (4 * math.pi) - 1)))
    spread = float((rv.values.max() - rv.values.min()) / rv.values.mean())
    rep = RG.identities_check(bt, "pole", 1.0)
    res = max(rep.residual_a, rep.residual_b, abs(rep.laplacian_margin))
    ok = l_err <= 1e-6 and v_err <= 5e-3 and spread <= 1e-3 and res <= 1e-6
    assert _report(acceptance_line, 10, "flat reduced geometry", ok,
                   f"l err {l_err:.1e}, V rel err {v_err:.1e}, spread {spread:.1e}, identity residual {res:.1e}", c)


def test_11_curved_reduced_volume(acceptance_line):
    """[PAPER] V non-increasing and min l <= n/2 on the shrinking round 3-sphere."""
    c = Clock(300)
    bt = RG.BackwardTrajectory(RG.shrinking_sphere_trajectory(3, 256, 0.02, 0.2, 721))
    rv = RG.reduced_volume(bt, "pole", [0.05, 0.1, 0.15], slack=1e-4)
    v = rv.values
    mono = all(v[i + 1] <= v[i] + 1e-4 for i in range(len(v) - 1))
    ok = mono and bool(np.all(rv.valid)) and float(np.max(rv.min_l)) <= 1.505
    assert _report(acceptance_line, 11, "curved reduced volume", ok,
                   f"V={np.round(v, 4).tolist()} min l={np.round(rv.min_l, 4).tolist()}", c)


def _torus_surface(N):
    prof = Profile("periodic", 1, N, 2 * math.pi)
    s = WarpedState.make(prof, 0.3 * np.cos(prof.x), np.zeros(N))
    return s.scaled(-float(s.scalar().min()))


def _suite(N):
    reps = []
    tr = F.run(F.round_state(2, N), F.FlowSettings(t_end=0.4, cadence=0.02))
    reps.append(V.scalar_barrier_check(tr))
    reps.append(V.surface_harnack_check(tr))
    tr = F.run(_torus_surface(N), F.FlowSettings(t_end=1.0, cadence=0.05))
    reps.append(V.scalar_barrier_check(tr))
    tr = F.run(F.perturbed_surface(N, 0.1), F.FlowSettings(t_end=0.3, cadence=0.002))
    reps.append(V.surface_harnack_check(tr, 1e-4))
    tr = F.run(F.round_state(3, N), F.FlowSettings(t_end=0.2, cadence=0.02))
    reps.append(V.hamilton_ivey_check(tr))
    flat3 = F.HomogeneousFlowState(0.0, G.HomogeneousState(G.FLAT_BRACKETS, 1.0, 1.0, 1.0))
    tr = F.run(flat3, F.FlowSettings(t_end=0.5, cadence=0.1))
    reps.append(V.hamilton_ivey_check(tr))
    tr = F.run(V.pinching_normalized(F.dumbbell_state(N)), F.FlowSettings(t_end=1.0, cadence=0.02))
    reps.append(V.hamilton_ivey_check(tr))
    s = round_sphere_state(1, N)
    rng = np.random.default_rng(7)
    u0 = 1.0 + 0.5 * rng.random() * np.cos(s.profile.x) + 0.3 * np.cos(2 * s.profile.x)
    hr = V.heat_run(s, u0, [0.1, 0.2, 0.3, 0.4, 0.5])
    reps.append(V.li_yau_check(hr))
    reps.append(V.classical_harnack_check(hr, count=100))
    tor = flat_torus_grid(N, 2 * math.pi, 1)
    hr = V.heat_run(tor, 1.0 + 0.5 * np.cos(tor.axis), np.linspace(0.1, 1.0, 10))
    reps.append(V.classical_harnack_check(hr, count=100))
    return reps


def _gaussian_li_yau(N):
    g = flat_window(N + 1, 6.0, 2)
    r2 = g.radius_sq()
    ts = np.array([1 - 1e-4, 1.0, 1 + 1e-4])
    u = np.array([np.exp(-r2 / (4 * t)) / (4 * math.pi * t) for t in ts])
    return V.li_yau_check(V.HeatRun(g, ts, u), 1e-6)


def test_12_barrier_and_pinching(acceptance_line):
    """[PAPER] barrier, Hamilton-Ivey, surface Harnack, Li-Yau, classical Harnack at two resolutions."""
    c = Clock(300)
    names = ["barrier S2", "surface Harnack S2", "barrier torus", "surface Harnack perturbed", "HI S3", "HI T3",
             "HI dumbbell", "Li-Yau S2", "Harnack S2", "Harnack torus"]
    coarse, fine = _suite(64), _suite(128)
    bad = []
    for name, a, b in zip(names, coarse, fine):
        est = 3 * abs(a.worst_margin - b.worst_margin) if math.isfinite(a.worst_margin) else 0.0
        if not a.passed and not b.passed and b.worst_margin < -max(b.tolerance, est):
            bad.append(name)
    ly = V.two_resolution(_gaussian_li_yau, 120)
    equality = abs(ly.details.get("max_abs_margin", ly.worst_margin))
    ok = not bad and ly.passed and equality <= 1e-6
    assert _report(acceptance_line, 12, "barrier and pinching suites", ok,
                   f"persistent violations {bad or 'none'}, Gaussian Li-Yau |margin| {equality:.1e}", c)


def test_13_kappa_and_distance(acceptance_line):
    """[DERIVED] flat volume ratio 4 pi/3; antipodal shrinking distance margin 8 sqrt(2/3) - 2 pi."""
    c = Clock(60)
    flat3 = WarpedState.make(Profile("plane", 2, 256, 10.0), 0.0)
    reps = RG.kappa_report(flat3, "pole", [0.5, 1.0, 3.0], kappa=1.0)
    ratio_err = max(abs(r.ratio - 4 * math.pi / 3) for r in reps)
    tr = F.run(F.round_state(3, 256), F.FlowSettings(t_end=0.2, cadence=0.01))
    rep = RG.distance_derivative_check(tr, 0, 256)
    expected = 8 * math.sqrt(2 / 3) - 2 * math.pi
    # near t = 0 (r close to 1) the margin approaches its closed form
    early = F.run(F.round_state(3, 256), F.FlowSettings(t_end=1e-3, cadence=1e-4))
    first = RG.distance_derivative_check(early, 0, 256).worst_margin
    ok = ratio_err <= 1e-9 and all(r.admissible for r in reps) and rep.passed and abs(first - expected) < 2e-3
    assert _report(acceptance_line, 13, "kappa and distance reports", ok,
                   f"ratio err {ratio_err:.1e}; distance margin {first:.4f} vs {expected:.4f}", c)


def test_14_neckpinch(acceptance_line):
    """[DERIVED] dumbbell ends BlownUp at the waist with an epsilon-neck before blow-up."""
    c = Clock(600)
    s = F.dumbbell_state(256)
    tr = F.run(s, F.FlowSettings(t_end=1.0, cadence=0.002))
    last = tr.states[-1]
    x = last.profile.x
    i = int(np.argmax(last.scalar()))
    waist = abs(x[i] - math.pi / 2) < 0.1
    necks = [st.t for st in tr.states[:-1] if F.detect_neck(st, 0.2).found]
    ok = tr.status == "BlownUp" and waist and bool(necks)
    assert _report(acceptance_line, 14, "neckpinch", ok,
                   f"status {tr.status} at t={last.t:.5f}, R_max at x={x[i]:.4f}, first neck t="
                   f"{necks[0] if necks else None}", c)


def test_15_determinism(acceptance_line, tmp_path):
    """[TRIVIAL] repeated golden-batch runs give identical artifact hashes."""
    c = Clock(300)
    batch = parse_config(GOLDEN)
    a = execute(batch, tmp_path / "a", jobs=1)
    b = execute(batch, tmp_path / "b", jobs=2)
    same = [x.files for x in a] == [y.files for y in b]
    same = same and (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    healthy = all(r.status in ("Completed", "Extinct") and r.severity == 0 for r in a)
    assert _report(acceptance_line, 15, "determinism", same and healthy,
                   f"{sum(len(x.files) for x in a)} artifacts, statuses {[r.status for r in a]}", c)
