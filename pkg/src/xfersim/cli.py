"""Command-line front end.

Scenarios come in as JSON documents, tabular results go out as CSV with a
fixed column schema, and every run directory gets a manifest recording the
scenario hash, seed and output listing.  Exit codes: 0 on success, 2 on
configuration errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .cauchy import (
    Scenario,
    Trajectory,
    evolve,
    mild_residual,
    validate_scenario,
)
from .errors import ConfigError, NumericalError
from .fixedpoint import HISTORY_COLUMNS, iterate_fixed_point
from .kernels import make_kernel
from .measures import AtomicMeasure, moment, w1_distance
from .oracles import moment_ode_solve
from .transfer import predicted_moments, t_b, t_b_mc

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@dataclass
class RunManifest:
    scenario_hash: str
    seed: int
    tool_version: str
    started: str
    finished: str
    outputs: list[str]

    def write(self, path: str) -> None:
        payload = dataclasses.asdict(self)
        payload["xfer_threads"] = os.environ.get("XFER_THREADS")
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)


def _utc_stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _load_scenario(path: str, args) -> tuple[Scenario, str]:
    with open(path, "rb") as fh:
        raw = fh.read()
    digest = hashlib.sha256(raw).hexdigest()
    scenario = Scenario.from_dict(json.loads(raw.decode("utf-8")))
    solver = scenario.solver
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "max_atoms", None) is not None:
        overrides["max_atoms"] = args.max_atoms
    if getattr(args, "dt", None) is not None:
        overrides["dt"] = args.dt
    if getattr(args, "t_end", None) is not None:
        overrides["t_end"] = args.t_end
    if overrides:
        scenario = replace(scenario, solver=replace(solver, **overrides))
    return scenario, digest


def _write_snapshots(traj: Trajectory, out_dir: str) -> list[str]:
    snap_dir = os.path.join(out_dir, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    names = []
    for i, (t, u) in enumerate(traj.snapshots):
        name = f"snapshots/{i:05d}.json"
        with open(os.path.join(out_dir, name), "w") as fh:
            json.dump({"t": t, **u.to_dict()}, fh)
            fh.write("\n")
        names.append(name)
    return names


def _finish_run(out_dir: str, digest: str, seed: int, started: str, outputs: list[str]) -> None:
    manifest = RunManifest(
        scenario_hash=digest,
        seed=seed,
        tool_version=__version__,
        started=started,
        finished=_utc_stamp(),
        outputs=sorted(outputs),
    )
    manifest.write(os.path.join(out_dir, "manifest.json"))


def _cmd_validate(args) -> int:
    scenario, _ = _load_scenario(args.scenario, args)
    problems = validate_scenario(scenario)
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_CONFIG
    print("scenario is valid")
    return EXIT_OK


def _cmd_apply(args) -> int:
    scenario, digest = _load_scenario(args.scenario, args)
    started = _utc_stamp()
    B = make_kernel(scenario.kernel)
    u = scenario.initial
    result, report = t_b(B, u, u, scenario.solver.max_atoms)
    predicted = predicted_moments(B, u, u)
    summary = {
        "mass": moment(result, 0),
        "mean_moment": moment(result, 1),
        "second_moment": moment(result, 2),
        "predicted": {"m0": predicted.m0, "m1": predicted.m1, "m2": predicted.m2},
        "merges_performed": report.merges_performed,
        "w1_error_bound": report.w1_error_bound,
        "n_atoms": result.n_atoms,
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "result.json"), "w") as fh:
            json.dump({"summary": summary, "measure": result.to_dict()}, fh)
            fh.write("\n")
        _finish_run(args.out, digest, scenario.solver.seed, started, ["result.json"])
    print(json.dumps(summary))
    return EXIT_OK


def _cmd_moments(args) -> int:
    scenario, _ = _load_scenario(args.scenario, args)
    B = make_kernel(scenario.kernel)
    u = scenario.initial
    loc_w = t_b(B, u, u, max_atoms=10**7)[0]
    predicted = predicted_moments(B, u, u)
    actual = [moment(loc_w, k) for k in (0, 1, 2)]
    print("moment,predicted,actual,abs_error")
    for k, pred in enumerate((predicted.m0, predicted.m1, predicted.m2)):
        print(f"m{k},{pred!r},{actual[k]!r},{abs(pred - actual[k])!r}")
    return EXIT_OK


def _cmd_fixpoint(args) -> int:
    scenario, digest = _load_scenario(args.scenario, args)
    started = _utc_stamp()
    B = make_kernel(scenario.kernel)
    report = iterate_fixed_point(
        B,
        scenario.initial,
        max_iter=args.max_iter,
        tol=args.tol,
        max_atoms=scenario.solver.max_atoms,
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.json"), "w") as fh:
            json.dump(report.to_dict(), fh)
            fh.write("\n")
        with open(os.path.join(args.out, "iterations.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            for row in report.history:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
        _finish_run(
            args.out, digest, scenario.solver.seed, started, ["report.json", "iterations.csv"]
        )
    print(
        f"converged={report.converged} iterations={report.iterations} "
        f"classification={report.classification} mean={report.mean!r} "
        f"variance={report.variance!r} mass_at_zero={report.mass_at_zero!r}"
    )
    return EXIT_OK


def _cmd_evolve(args) -> int:
    scenario, digest = _load_scenario(args.scenario, args)
    started = _utc_stamp()
    traj = evolve(scenario)
    os.makedirs(args.out, exist_ok=True)
    traj.write_csv(os.path.join(args.out, "trajectory.csv"))
    outputs = ["trajectory.csv"]
    if not args.no_snapshots:
        outputs += _write_snapshots(traj, args.out)
    _finish_run(args.out, digest, scenario.solver.seed, started, outputs)
    print(f"wrote {args.out}/trajectory.csv ({len(traj.snapshots)} snapshots)")
    return EXIT_OK


def _cmd_mc(args) -> int:
    scenario, digest = _load_scenario(args.scenario, args)
    started = _utc_stamp()
    B = make_kernel(scenario.kernel)
    u = scenario.initial
    exact, _ = t_b(B, u, u, max_atoms=10**7)
    exact_prob = exact.scaled(1.0 / moment(exact, 0))
    ns = [int(x) for x in args.ns.split(",")]
    rows = []
    for n in ns:
        dists = []
        for rep in range(args.replicates):
            rng = np.random.default_rng(scenario.solver.seed + 1000 * rep)
            emp = t_b_mc(B, u, u, n, rng)
            emp_prob = emp.scaled(1.0 / moment(emp, 0))
            dists.append(w1_distance(emp_prob, exact_prob))
        rows.append((n, float(np.mean(dists))))
    slope = None
    if len(rows) >= 2:
        logs = np.log([r[0] for r in rows]), np.log([r[1] for r in rows])
        slope = float(np.polyfit(logs[0], logs[1], 1)[0])
    lines = ["n_samples,w1"] + [f"{n},{d!r}" for n, d in rows]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "mc.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        _finish_run(args.out, digest, scenario.solver.seed, started, ["mc.csv"])
    print("\n".join(lines))
    if slope is not None:
        print(f"slope={slope!r}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    scenario, digest = _load_scenario(args.scenario, args)
    started = _utc_stamp()
    schemes = args.schemes.split(",")
    trajectories = {}
    for name in schemes:
        mode = {"atomic": "atomic_euler", "grid": "grid_picard", "particles": "particles"}.get(
            name
        )
        if mode is None:
            raise ConfigError(f"unknown scheme {name!r} (use atomic, grid, particles)")
        traj = evolve(replace(scenario, solver=replace(scenario.solver, mode=mode)))
        trajectories[name] = traj

    # common snapshot times and pairwise normalized-W1 discrepancies
    times = None
    for traj in trajectories.values():
        ts = {round(t, 12) for t, _ in traj.snapshots}
        times = ts if times is None else times & ts
    times = sorted(times or [])
    pairs = [
        (a, b) for i, a in enumerate(schemes) for b in schemes[i + 1 :]
    ]
    header = ["t"] + [f"w1_{a}_vs_{b}" for a, b in pairs] + ["oracle_mass", "oracle_mean", "oracle_variance"]

    from .cauchy import ConstantGrowth

    oracle = None
    if isinstance(scenario.growth, ConstantGrowth) and not any(
        p.measure.n_atoms for p in scenario.source.pieces
    ):
        B = make_kernel(scenario.kernel)
        u0 = scenario.initial
        oracle = {
            round(s.t, 12): s
            for s in moment_ode_solve(
                B,
                moment(u0, 0),
                moment(u0, 1),
                moment(u0, 2),
                scenario.growth.c,
                scenario.solver.t_end,
                scenario.solver.dt,
            )
        }

    lines = [",".join(header)]
    for t in times:
        row = [repr(float(t))]
        for a, b in pairs:
            ua = trajectories[a].snapshot_at(t)
            ub = trajectories[b].snapshot_at(t)
            d = w1_distance(ua.scaled(1.0 / moment(ua, 0)), ub.scaled(1.0 / moment(ub, 0)))
            row.append(repr(d))
        if oracle is not None and t in oracle:
            s = oracle[t]
            row += [repr(s.m0), repr(s.mean), repr(s.variance)]
        else:
            row += ["", "", ""]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "compare.csv"), "w") as fh:
            fh.write(text)
        _finish_run(args.out, digest, scenario.solver.seed, started, ["compare.csv"])
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xfersim",
        description="Simulate trait-transfer population dynamics on atomic measures",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--scenario", required=True, help="path to the scenario JSON file")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--max-atoms", dest="max_atoms", type=int, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--t-end", dest="t_end", type=float, default=None)

    p = sub.add_parser("apply", help="one transfer-operator application to the initial measure")
    common(p)
    p.set_defaults(func=_cmd_apply)

    p = sub.add_parser("moments", help="predicted vs actual product moments")
    common(p)
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("fixpoint", help="iterate the self-transfer map to a fixed distribution")
    common(p)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=_cmd_fixpoint)

    p = sub.add_parser("evolve", help="integrate the Cauchy problem and write a trajectory")
    common(p, out_required=True)
    p.add_argument("--no-snapshots", action="store_true", help="skip per-snapshot JSON files")
    p.set_defaults(func=_cmd_evolve)

    p = sub.add_parser("mc", help="Monte Carlo estimator convergence study")
    common(p)
    p.add_argument("--ns", default="1000,10000,100000", help="comma-separated sample counts")
    p.add_argument("--replicates", type=int, default=4)
    p.set_defaults(func=_cmd_mc)

    p = sub.add_parser("compare", help="cross-validate schemes and the moment oracle")
    common(p)
    p.add_argument("--schemes", default="atomic,grid", help="comma list: atomic,grid,particles")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("validate", help="lint a scenario against its declared bounds")
    common(p)
    p.set_defaults(func=_cmd_validate)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
