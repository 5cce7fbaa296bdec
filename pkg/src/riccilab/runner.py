"""Batch execution of scenarios and deterministic artifact emission.

Per scenario ``<id>`` the output directory receives ``<id>.trajectory.csv``,
``<id>.states.json`` (enough to rebuild every stored state), optionally
``<id>.entropy.csv`` and ``<id>.reduced.csv``, and ``<id>.report.json``
with the status, check reports and sha256 hashes of the other files.
Nothing time- or host-dependent is written, so reruns are byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from . import entropy as ent
from .config import Scenario
from .errors import RicciLabError
from .flat import flat_window
from .flow import (CurvODEState, FlowSettings, FlowTrajectory, HomogeneousFlowState, cigar_state,
                   detect_neck, dumbbell_state, perturbed_surface, round_state, run)
from .geometries import HomogeneousState, gaussian_data
from .profile import Profile, WarpedState, flat_disk_state, flat_torus_state
from .reduced import BackwardTrajectory, identities_check, reduced_volume
from .reports import CheckReport, jsonable, make_report, not_applicable
from . import reduced as red
from . import verifiers as ver

OUT_ENV = "RICCILAB_OUT"
STATUSES = ("Completed", "Extinct", "BlownUp", "Failed")


# ---------------------------------------------------------------------------
# formatting

def fmt(x) -> str:
    """Shortest round-trip representation."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "nan"
    return repr(float(x))


def csv_text(columns: Sequence[tuple], rows, scenario_id: str) -> str:
    """``columns``: (name, description, producer) triples documented in the header."""
    lines = [f"# riccilab {__version__}", f"# scenario: {scenario_id}"]
    for name, desc, producer in columns:
        lines.append(f"# column {name}: {desc} [{producer}]")
    lines.append(",".join(c[0] for c in columns))
    for r in rows:
        lines.append(",".join(fmt(v) for v in r))
    return "\n".join(lines) + "\n"


def write_csv(path: Path, columns: Sequence[tuple], rows, scenario_id: str):
    path.write_text(csv_text(columns, rows, scenario_id))


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# initial data

def build_initial(family: str, params: dict, N: int):
    p = params
    if family == "sphere":
        n = int(p["n"])
        if n not in (2, 3):
            raise ValueError("sphere family supports n = 2 or 3")
        return round_state(n, N, float(p["r"]))
    if family == "perturbed_surface":
        return perturbed_surface(N, float(p["amp"]), int(p["mode"]))
    if family == "dumbbell":
        s = dumbbell_state(N, float(p["neck"]), float(p["neck_half_width"]), float(p["stretch"]),
                           float(p["dip"]), float(p["edge"]))
        return ver.pinching_normalized(s) if p["normalize_pinching"] else s
    if family == "cigar":
        return cigar_state(N, float(p["X"]))
    if family == "flat_disk":
        return flat_disk_state(N, float(p["radius"]))
    if family == "flat_torus":
        return flat_torus_state(N, float(p["side"]))
    if family == "torus_surface":
        prof = Profile("periodic", 1, N, float(p["side"]))
        s = WarpedState.make(prof, float(p["amp"]) * np.cos(2 * math.pi * prof.x / prof.length), np.zeros(N))
        R = s.scalar()
        if p["normalize_R"] and R.min() < 0:
            s = s.scaled(-float(R.min()))
        return s
    if family == "homogeneous":
        return HomogeneousFlowState(0.0, HomogeneousState(tuple(p["brackets"]), float(p["A"]), float(p["B"]),
                                                          float(p["C"])))
    if family == "curvode":
        return CurvODEState(0.0, np.array(p["alpha"], dtype=float))
    raise ValueError(f"family {family} has no flow state")


# ---------------------------------------------------------------------------
# state files

def states_document(sc: Scenario, traj: FlowTrajectory) -> dict:
    doc = {"family": sc.family, "params": sc.params, "N": sc.N, "status": traj.status,
           "extinction_time": traj.extinction_time, "states": []}
    for s in traj.states:
        if isinstance(s, WarpedState):
            doc["states"].append({"t": s.t, "lam": s.lam, "a": [float(v) for v in s.a]})
        elif isinstance(s, HomogeneousFlowState):
            doc["states"].append({"t": s.t, "ABC": [s.hs.A, s.hs.B, s.hs.C]})
        else:
            doc["states"].append({"t": s.t, "alpha": [float(v) for v in s.alpha]})
    return doc


def load_trajectory(path) -> FlowTrajectory:
    """Rebuild a trajectory from a ``<id>.states.json`` file."""
    doc = json.loads(Path(path).read_text())
    init = build_initial(doc["family"], doc["params"], int(doc["N"]))
    traj = FlowTrajectory()
    for st in doc["states"]:
        if isinstance(init, WarpedState):
            s = init.with_a(np.array(st["a"]), t=st["t"], lam=st["lam"])
        elif isinstance(init, HomogeneousFlowState):
            A, B, C = st["ABC"]
            s = HomogeneousFlowState(st["t"], HomogeneousState(init.hs.brackets, A, B, C))
        else:
            s = CurvODEState(st["t"], st["alpha"])
        traj.append(s)
    traj.status = doc["status"]
    traj.extinction_time = doc["extinction_time"]
    return traj


# ---------------------------------------------------------------------------
# tables

TRAJ_COLUMNS = [
    ("t", "output time", "flow-engine.run"),
    ("volume", "total volume", "flow-engine.diagnose"),
    ("R_min", "minimum scalar curvature", "flow-engine.diagnose"),
    ("R_max", "maximum scalar curvature", "flow-engine.diagnose"),
    ("max_sec", "maximum |sectional curvature|", "flow-engine.diagnose"),
    ("dt", "last accepted step", "flow-engine.run"),
    ("extinct", "1 on the extinction sample", "flow-engine.run"),
]
ENTROPY_COLUMNS = [
    ("t", "time", "flow-engine.run"),
    ("tau", "backward time parameter", "entropy"),
    ("F", "F functional", "entropy.f_eval"),
    ("W", "W functional (nan when tau <= 0)", "entropy.w_eval"),
    ("lambda", "lowest eigenvalue of -4 Laplacian + R", "entropy.lambda_eval"),
    ("mu", "log-Sobolev minimum of W", "entropy.mu_eval"),
    ("mass", "(4 pi tau)^(-n/2) int exp(-f) dV", "entropy.mass"),
    ("volume", "total volume of the state", "flow-engine.diagnose"),
]
REDUCED_COLUMNS = [
    ("tau", "backward time", "reduced-geometry.reduced_volume"),
    ("V_tilde", "reduced volume", "reduced-geometry.reduced_volume"),
    ("min_l", "minimum reduced distance over the grid", "reduced-geometry.reduced_distance_field"),
    ("valid", "1 if failed targets carry < 1% of the volume", "reduced-geometry.reduced_volume"),
    ("residual_a", "gradient identity residual", "reduced-geometry.identities_check"),
    ("residual_b", "tau-derivative identity residual", "reduced-geometry.identities_check"),
    ("laplacian_margin", "Laplacian inequality margin", "reduced-geometry.identities_check"),
]


def _entropy_rows(sc: Scenario, traj: Optional[FlowTrajectory]):
    spec = sc.entropy
    rows = []
    if sc.family == "gaussian":
        n = int(sc.params["n"])
        N = sc.N if sc.N % 2 else sc.N + 1
        g = flat_window(N, float(sc.params["half_width"]), n)
        for tau in (spec.tau_list or [spec.tau]):
            gd = gaussian_data(n, tau)
            pts = g.points().reshape(-1, n)
            # F is taken against the probability measure, W against (4 pi tau)^(-n/2) e^(-f)
            f_prob = gd.f(pts).reshape(g.shape)
            f_w = gd.f_unnormalized(pts).reshape(g.shape)
            F = ent.f_eval(g, f_prob)
            W = ent.w_eval(g, f_w, tau, check=False) if "W" in spec.quantities else math.nan
            mu = ent.mu_eval(g, tau).mu if "mu" in spec.quantities else math.nan
            rows.append((0.0, tau, F, W, math.nan, mu, ent.mass(g, f_w, tau), g.volume()))
        return rows
    t0 = traj.states[0].t
    for s in traj.states:
        if not isinstance(s, WarpedState):
            continue
        tau = spec.tau - (s.t - t0)
        tw = tau if tau > 0 else None
        if spec.potential == "gaussian" and tw is not None and s.profile.base == "plane":
            f = ent.normalize_potential(s, s.profile.x ** 2 / (4 * tau), tau)
        else:
            f = ent.normalize_potential(s, np.zeros(s.profile.N), tw)
        F = ent.f_eval(s, f)
        W = ent.w_eval(s, f, tau, check=False) if ("W" in spec.quantities and tw) else math.nan
        lam = ent.lambda_eval(s) if ("lambda" in spec.quantities and s.profile.closed) else math.nan
        mu = ent.mu_eval(s, tau).mu if ("mu" in spec.quantities and tw) else math.nan
        rows.append((s.t, tau, F, W, lam, mu, ent.mass(s, f, tw), s.volume()))
    return rows


def _reduced_rows(sc: Scenario, traj: FlowTrajectory):
    spec = sc.reduced
    if len(traj.states) == 1:
        bt = BackwardTrajectory.from_state(traj.states[0])
    else:
        bt = BackwardTrajectory(traj, spec.t0)
    rv = reduced_volume(bt, "pole", spec.tau_list, spec.M)
    rows = []
    for tau, V, ml, ok in rv.rows():
        ra = rb = mlap = math.nan
        if spec.identities:
            rep = identities_check(bt, "pole", tau, M=spec.M)
            ra, rb, mlap = rep.residual_a, rep.residual_b, rep.laplacian_margin
        rows.append((tau, V, ml, ok, ra, rb, mlap))
    return rows, rv


# ---------------------------------------------------------------------------
# checks

def _column(tables: dict, quantity: str):
    if not quantity or "." not in quantity:
        raise ValueError("quantity must be 'table.column', e.g. 'entropy.F'")
    table, col = quantity.split(".", 1)
    if table not in tables:
        raise ValueError(f"scenario produced no {table} table")
    cols, rows = tables[table]
    if col not in cols:
        raise ValueError(f"{table} table has no column {col}")
    j = cols.index(col)
    return [(float(r[j]), float(r[0]), i) for i, r in enumerate(rows)]


def evaluate_check(spec, traj: Optional[FlowTrajectory], tables: dict, status: str) -> CheckReport:
    name, tol = spec.name, spec.tolerance
    if name == "status":
        ok = status in (spec.status or ["Completed"])
        return CheckReport("status", ok, 0.0 if ok else -1.0, (math.nan, -1), 1, 0.0, True,
                           {"status": status, "allowed": spec.status or ["Completed"]})
    if name == "extinction_time":
        T = traj.extinction_time if traj is not None else None
        if T is None:
            return CheckReport(name, False, -math.inf, (math.nan, -1), 1, 0.0, True, {"extinction_time": None})
        return make_report(name, [(tol - abs(T - spec.expected), T, -1)], 0.0,
                           {"extinction_time": T, "expected": spec.expected})
    if name == "expect":
        vals = _column(tables, spec.quantity)
        ref = spec.expected
        scale = abs(ref) if spec.relative and ref else 1.0
        return make_report(f"expect:{spec.quantity}", ((tol - abs(v - ref) / scale, t, i) for v, t, i in vals),
                           0.0, {"expected": ref, "relative": spec.relative, "values": [v for v, _, _ in vals]})
    if name == "upper_bound":
        vals = _column(tables, spec.quantity)
        return make_report(f"upper_bound:{spec.quantity}", ((spec.upper - v, t, i) for v, t, i in vals), tol,
                           {"upper": spec.upper})
    if name == "monotone":
        vals = [v for v in _column(tables, spec.quantity) if math.isfinite(v[0])]
        sgn = -1.0 if (spec.direction or "nonincreasing") == "nonincreasing" else 1.0
        scale = max([abs(v) for v, _, _ in vals] + [1.0]) if spec.relative else 1.0
        margins = [(sgn * (b[0] - a[0]) / scale, b[1], b[2]) for a, b in zip(vals[:-1], vals[1:])]
        return make_report(f"monotone:{spec.quantity}", margins, tol, {"direction": spec.direction})
    if traj is None:
        return not_applicable(name, "scenario has no trajectory")
    if name == "scalar_barrier":
        return ver.scalar_barrier_check(traj, tol)
    if name == "hamilton_ivey":
        return ver.hamilton_ivey_check(traj, tol)
    if name == "surface_harnack":
        return ver.surface_harnack_check(traj, tol)
    if name == "trace_harnack":
        return ver.trace_harnack_check(traj, tol)
    if name == "invariant_cone":
        return ver.invariant_cone_check(traj, tol)
    if name == "distance_derivative":
        N = traj.states[0].profile.N
        a, b = spec.nodes or [0, N]
        return red.distance_derivative_check(traj, a, b, tolerance=tol)
    if name == "neck":
        eps = spec.epsilon or 0.2
        hits = [s.t for s in traj.states if isinstance(s, WarpedState) and detect_neck(s, eps).found]
        ok = bool(hits)
        return CheckReport("neck", ok, 0.0 if ok else -1.0, (hits[0] if ok else math.nan, -1),
                           len(traj.states), 0.0, True, {"epsilon": eps, "first_time": hits[0] if ok else None})
    raise ValueError(f"unknown check {name}")


# ---------------------------------------------------------------------------
# execution

@dataclass
class RunSummary:
    scenario_id: str
    status: str
    extinction_time: Optional[float]
    checks: List[dict] = field(default_factory=list)
    files: Dict[str, str] = field(default_factory=dict)
    severity: int = 0
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {"id": self.scenario_id, "status": self.status, "extinction_time": self.extinction_time,
                "checks": self.checks, "files": self.files, "severity": self.severity, "error": self.error}


def run_scenario(sc: Scenario, out_dir) -> RunSummary:
    """Run one scenario, writing its artifacts; failures are captured, never raised."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    summary = RunSummary(sc.id, "Failed", None)
    try:
        np.random.seed(sc.seed)
        traj = None
        status = "Completed"
        tables = {}
        if sc.family != "gaussian":
            init = build_initial(sc.family, sc.params, sc.N)
            st = FlowSettings(t_end=sc.t_end, dt_max=sc.dt.dt_max, c_cfl=sc.dt.c_cfl, dt_min=sc.dt.dt_min,
                              ceiling=sc.ceilings.curvature, normalized=sc.normalized, cadence=sc.outputs.cadence)
            traj = run(init, st)
            status = traj.status
            summary.extinction_time = traj.extinction_time
            rows = [(d.t, d.volume, d.R_min, d.R_max, d.max_sec, d.dt, d.extinction_flag) for d in traj.diagnostics]
            tables["trajectory"] = ([c[0] for c in TRAJ_COLUMNS], rows)
            p = out / f"{sc.id}.trajectory.csv"
            write_csv(p, TRAJ_COLUMNS, rows, sc.id)
            written.append(p)
            p = out / f"{sc.id}.states.json"
            p.write_text(_dump(states_document(sc, traj)))
            written.append(p)
        if sc.entropy is not None:
            rows = _entropy_rows(sc, traj)
            tables["entropy"] = ([c[0] for c in ENTROPY_COLUMNS], rows)
            p = out / f"{sc.id}.entropy.csv"
            write_csv(p, ENTROPY_COLUMNS, rows, sc.id)
            written.append(p)
        if sc.reduced is not None:
            if traj is None:
                raise ValueError("reduced geometry needs a flow family")
            rows, _ = _reduced_rows(sc, traj)
            tables["reduced"] = ([c[0] for c in REDUCED_COLUMNS], rows)
            p = out / f"{sc.id}.reduced.csv"
            write_csv(p, REDUCED_COLUMNS, rows, sc.id)
            written.append(p)
        summary.status = status
        reports = []
        for spec in sc.checks:
            try:
                reports.append(evaluate_check(spec, traj, tables, status))
            except RicciLabError as e:
                reports.append(CheckReport(spec.name, False, -math.inf, (math.nan, -1), 0, spec.tolerance, True,
                                           {"error": f"{type(e).__name__}: {e}"}))
        summary.checks = [r.to_dict() for r in reports]
        summary.severity = 2 if any(not r.passed for r in reports) else 0
    except RicciLabError as e:
        summary.status, summary.error, summary.severity = "Failed", f"{type(e).__name__}: {e}", max(3, e.severity)
    except Exception as e:  # isolate the batch from any scenario failure
        summary.status, summary.error, summary.severity = "Failed", f"{type(e).__name__}: {e}", 3
        summary.checks.append({"name": "internal", "traceback": traceback.format_exc(limit=3).splitlines()[-1]})
    summary.files = {p.name: sha256(p) for p in written}
    (out / f"{sc.id}.report.json").write_text(_dump(summary.to_dict()))
    return summary


def _job(args):
    sc, out = args
    return run_scenario(sc, out)


def resolve_out_dir(cli_value: Optional[str]) -> Path:
    if cli_value:
        return Path(cli_value)
    return Path(os.environ.get(OUT_ENV, "riccilab-out"))


def execute(batch: Sequence[Scenario], out_dir, jobs: int = 1) -> List[RunSummary]:
    """Run every scenario (optionally in ``jobs`` processes); summaries sorted by id."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    work = [(sc, str(out)) for sc in batch]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, work))
    else:
        results = [_job(w) for w in work]
    results.sort(key=lambda r: r.scenario_id)
    manifest = {r.scenario_id: dict(sorted(r.files.items())) for r in results}
    for r in results:
        manifest[r.scenario_id][f"{r.scenario_id}.report.json"] = sha256(out / f"{r.scenario_id}.report.json")
    (out / "manifest.json").write_text(_dump(manifest))
    return results


def batch_severity(results: Sequence[RunSummary]) -> int:
    return max([r.severity for r in results] + [0])
