"""Command line interface: ``riccilab <command> [options]``.

Exit codes: 0 success, 1 configuration or usage error, 2 a check failed,
3 internal/numerical error.  The output directory of ``run`` defaults to
``$RICCILAB_OUT`` and then ``./riccilab-out``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from . import geometries as geo
from . import reduced as red
from . import runner
from . import tensor
from .config import FAMILIES, CheckSpec, EntropySpec, Scenario, parse_config
from .errors import RicciLabError, SchemaError
from .flow import CurvODEState, FlowSettings, run

FLOW_CHECKS = ("scalar_barrier", "hamilton_ivey", "surface_harnack", "trace_harnack", "invariant_cone",
               "distance_derivative", "neck")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _kv(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected key=value")
    k, v = text.split("=", 1)
    try:
        val = json.loads(v)
    except json.JSONDecodeError:
        val = v
    return k, val


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


_dump = runner._dump


# ---------------------------------------------------------------------------
# commands

def cmd_run(args) -> int:
    batch = parse_config(Path(args.config).read_text())
    if args.only:
        wanted = set(args.only.split(","))
        batch = [sc for sc in batch if sc.id in wanted]
        if not batch:
            raise SchemaError("--only matched no scenario id", field="id")
    out = runner.resolve_out_dir(args.out)
    results = runner.execute(batch, out, jobs=args.jobs)
    if not args.quiet:
        for r in results:
            failed = [c["name"] for c in r.checks if not c.get("passed", True)]
            tail = f" error={r.error}" if r.error else (f" failed={','.join(failed)}" if failed else "")
            print(f"{r.scenario_id}: {r.status} severity={r.severity}{tail}")
        print(f"artifacts: {out}")
    return runner.batch_severity(results)


def cmd_curvature(args) -> int:
    params = tuple(args.param or ())
    if not params and args.family in ("sphere", "hyperbolic", "torus"):
        params = (1.0,)
    fam = geo.MetricFamily(args.family, args.dim, params)
    rows = []
    for p in args.point:
        if len(p) != fam.dim:
            raise SchemaError(f"point {p} needs {fam.dim} coordinates", field="point")
        b = tensor.curvature(geo.sample(fam, np.array(p)))
        rows.append({"point": p, "scalar": b.scalar, "ricci": b.ricci.tolist(),
                     "sectional": b.sectional.tolist(), "alpha": None if b.alpha is None else b.alpha.tolist()})
    _emit(_dump(rows), args.out)
    return 0


def _scenario(family, params, N, **kw) -> Scenario:
    return Scenario(id="cli", family=family, params=dict(params or []), N=N, **kw)


def cmd_entropy(args) -> int:
    spec = EntropySpec(tau=args.tau, potential=args.potential, quantities=args.quantities.split(","),
                       tau_list=args.tau_list)
    if args.states:
        traj = runner.load_trajectory(args.states)
        doc = json.loads(Path(args.states).read_text())
        sc = _scenario(doc["family"], doc["params"].items(), int(doc["N"]), t_end=0.0, entropy=spec)
    else:
        static = args.family in ("gaussian",)
        sc = _scenario(args.family, args.param, args.N, t_end=None if static else 0.0, entropy=spec)
        traj = None
        if not static:
            traj = runner.run(runner.build_initial(sc.family, sc.params, sc.N), FlowSettings(t_end=0.0))
    rows = runner._entropy_rows(sc, traj)
    _emit(_table(runner.ENTROPY_COLUMNS, rows, sc.id if not args.states else Path(args.states).stem), args.out)
    return 0


def _table(columns, rows, label) -> str:
    return runner.csv_text(columns, rows, label)


def cmd_reduced(args) -> int:
    traj = runner.load_trajectory(args.states)
    if len(traj.states) == 1:
        bt = red.BackwardTrajectory.from_state(traj.states[0])
    else:
        bt = red.BackwardTrajectory(traj, args.t0)
    rv = red.reduced_volume(bt, "pole", args.tau, args.M)
    rows = []
    for tau, V, ml, ok in rv.rows():
        ra = rb = mlap = math.nan
        if args.identities:
            rep = red.identities_check(bt, "pole", tau, M=args.M)
            ra, rb, mlap = rep.residual_a, rep.residual_b, rep.laplacian_margin
        rows.append((tau, V, ml, ok, ra, rb, mlap))
    _emit(_table(runner.REDUCED_COLUMNS, rows, Path(args.states).stem), args.out)
    return 0 if all(r[3] for r in rows) else 2


def cmd_verify(args) -> int:
    traj = runner.load_trajectory(args.states)
    names = args.checks.split(",")
    unknown = [n for n in names if n not in FLOW_CHECKS]
    if unknown:
        raise SchemaError(f"unknown checker {unknown[0]} (known: {', '.join(FLOW_CHECKS)})", field="checks")
    reports = []
    for n in names:
        kw = {"name": n}
        if args.tolerance is not None:
            kw["tolerance"] = args.tolerance
        if n == "neck":
            kw["epsilon"] = args.epsilon
        if n == "distance_derivative" and args.nodes:
            kw["nodes"] = args.nodes
        spec = CheckSpec(**kw)
        if args.tolerance is None:
            spec.tolerance = _DEFAULT_TOL.get(n, spec.tolerance)
        reports.append(runner.evaluate_check(spec, traj, {}, traj.status).to_dict())
    _emit(_dump(reports), args.out)
    return 0 if all(r["passed"] for r in reports) else 2


_DEFAULT_TOL = {"scalar_barrier": 1e-6, "hamilton_ivey": 1e-6, "surface_harnack": 1e-4, "trace_harnack": 1e-9,
                "invariant_cone": 1e-12, "distance_derivative": 1e-6, "neck": 0.0}


def cmd_ode3(args) -> int:
    if len(args.alpha) != 3:
        raise SchemaError("--alpha needs three values", field="alpha")
    st = FlowSettings(t_end=args.t_end, dt_max=args.dt_max, cadence=args.cadence, ceiling=args.ceiling)
    traj = run(CurvODEState(0.0, np.array(args.alpha)), st)
    cols = [("t", "time", "flow-engine.run"),
            ("alpha1", "curvature-operator eigenvalue (x2)", "flow-engine.step"),
            ("alpha2", "curvature-operator eigenvalue (x2)", "flow-engine.step"),
            ("alpha3", "curvature-operator eigenvalue (x2)", "flow-engine.step")]
    rows = [(s.t, *s.alpha) for s in traj.states]
    _emit(_table(cols, rows, f"ode3 status={traj.status}"), args.out)
    rep = runner.ver.invariant_cone_check(traj, args.tolerance)
    print(_dump(rep.to_dict()), end="", file=sys.stderr)
    return 0 if rep.passed else 2


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="riccilab", description="Ricci flow laboratory on symmetry-reduced geometries.")
    p.add_argument("--version", action="version", version=f"riccilab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="execute a TOML batch of scenarios",
                       description="Run every [[scenario]] of CONFIG and write artifacts plus manifest.json.")
    r.add_argument("config", help="path to the TOML batch file")
    r.add_argument("--out", help="output directory (default: $RICCILAB_OUT or ./riccilab-out)")
    r.add_argument("--jobs", type=int, default=1, help="number of worker processes (default 1)")
    r.add_argument("--only", help="comma-separated scenario ids to run")
    r.add_argument("--quiet", action="store_true", help="suppress the per-scenario summary")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("curvature", help="curvature of a model metric at chart points",
                       description="Print Ricci, scalar, sectional curvatures and (in 3D) the doubled "
                                   "curvature-operator eigenvalues as JSON.")
    c.add_argument("--family", required=True, choices=[k.value for k in geo.Kind], help="metric family")
    c.add_argument("--dim", type=int, required=True, help="dimension (1-3)")
    c.add_argument("--param", type=float, action="append",
                   help="family parameter, repeatable (radius, side, or cigar time; scale defaults to 1)")
    c.add_argument("--point", type=_floats, action="append", required=True,
                   help="comma-separated chart coordinates, repeatable")
    c.add_argument("--out", help="write JSON here instead of stdout")
    c.set_defaults(func=cmd_curvature)

    e = sub.add_parser("entropy", help="F, W, lambda, mu on initial data or a saved trajectory",
                       description="Evaluate entropy functionals; output is CSV.")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--family", choices=sorted(FAMILIES), help="initial-data family")
    src.add_argument("--states", help="a <id>.states.json file written by 'run'")
    e.add_argument("--param", type=_kv, action="append", help="family parameter key=value, repeatable")
    e.add_argument("--N", type=int, default=256, help="grid cells (default 256)")
    e.add_argument("--tau", type=float, required=True, help="tau at the first sample")
    e.add_argument("--tau-list", type=_floats, help="tau values (gaussian family only)")
    e.add_argument("--potential", choices=["constant", "gaussian"], default="constant",
                   help="test potential before normalization (default constant)")
    e.add_argument("--quantities", default="F,W", help="subset of F,W,lambda,mu (default F,W)")
    e.add_argument("--out", help="write CSV here instead of stdout")
    e.set_defaults(func=cmd_entropy)

    d = sub.add_parser("reduced", help="reduced volume and identities from a saved trajectory",
                       description="Reduced distance and volume based at the left pole; CSV output. "
                                   "Exit 2 if any tau has too many failed geodesics.")
    d.add_argument("--states", required=True, help="a <id>.states.json file written by 'run'")
    d.add_argument("--tau", type=_floats, required=True, help="comma-separated backward times")
    d.add_argument("--t0", type=float, help="base time (default: last stored state)")
    d.add_argument("--M", type=int, default=256, help="RK4 steps per geodesic (default 256)")
    d.add_argument("--identities", action="store_true", help="also evaluate the three identities")
    d.add_argument("--out", help="write CSV here instead of stdout")
    d.set_defaults(func=cmd_reduced)

    v = sub.add_parser("verify", help="run checkers on a saved trajectory",
                       description="Print a JSON array of check reports; exit 2 if any fails.")
    v.add_argument("--states", required=True, help="a <id>.states.json file written by 'run'")
    v.add_argument("--checks", required=True, help=f"comma-separated subset of {','.join(FLOW_CHECKS)}")
    v.add_argument("--tolerance", type=float, help="override every checker's default tolerance")
    v.add_argument("--epsilon", type=float, default=0.2, help="neck epsilon (default 0.2)")
    v.add_argument("--nodes", type=lambda s: [int(x) for x in s.split(",")],
                   help="two node indices for distance_derivative (default: both poles)")
    v.add_argument("--out", help="write JSON here instead of stdout")
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("ode3", help="integrate the 3D curvature-operator ODE",
                       description="CSV of (t, alpha1..3) on stdout; invariant-cone report on stderr.")
    o.add_argument("--alpha", type=_floats, required=True, help="three initial values a,b,c")
    o.add_argument("--t-end", type=float, required=True, help="final time")
    o.add_argument("--dt-max", type=float, default=1e-3, help="maximum step (default 1e-3)")
    o.add_argument("--cadence", type=float, help="output spacing (default: end time only)")
    o.add_argument("--ceiling", type=float, default=1e6, help="stop when max |alpha|/2 exceeds this")
    o.add_argument("--tolerance", type=float, default=1e-12, help="cone check tolerance")
    o.add_argument("--out", help="write CSV here instead of stdout")
    o.set_defaults(func=cmd_ode3)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except SchemaError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except RicciLabError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return e.severity
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - last resort
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
