"""Command-line front end: dataset synthesis, identification, landscape
export, and randomized verification suites.

Every artifact-producing command writes a run manifest (the resolved
configuration plus tool version) so results can be reproduced from the
output alone.  Logging verbosity is controlled by the GLOBID_LOG
environment variable (error, info, or debug).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, bnb, pkpd, verify, wiener
from .bnb import SolverConfig
from .wiener import Box, ProblemConfig

log = logging.getLogger("globid.cli")

E0_CONFLICT_TOL = 0.5


@dataclass
class RunManifest:
    command: str
    inputs: dict
    config: dict
    seed: int | None = None
    version: str = field(default=__version__)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def _setup_logging() -> None:
    level = os.environ.get("GLOBID_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        print(f"warning: unknown GLOBID_LOG={level!r}, using 'error'", file=sys.stderr)
        level = "error"
    logging.basicConfig(
        level=levels[level],
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _parse_box(text: str) -> Box:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(
            f"box must be 'g-,g+,e-,e+' (4 numbers), got {text!r}"
        )
    g_lo, g_hi, e_lo, e_hi = parts
    if g_lo >= g_hi or e_lo >= e_hi:
        raise argparse.ArgumentTypeError(f"box edges must be increasing: {text!r}")
    return Box(np.array([g_lo, e_lo]), np.array([g_hi, e_hi]))


def _parse_order(text: str) -> tuple[int, int]:
    parts = [int(v) for v in text.split(",")]
    if len(parts) == 1:
        return parts[0], parts[0]
    if len(parts) == 2:
        return parts[0], parts[1]
    raise argparse.ArgumentTypeError(f"order must be 'N' or 'N,M', got {text!r}")


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        g, h = text.lower().split("x")
        return int(g), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be 'GxH', got {text!r}") from None


def _resolve_patient(spec: str) -> pkpd.PatientRecord:
    """A bundled-table id (e.g. '1') or a path to a patient JSON file."""
    if spec.isdigit():
        table = pkpd.load_patient_table()
        pid = int(spec)
        for pat in table:
            if pat.id == pid:
                return pat
        raise SystemExit(f"error: no bundled patient with id {pid} (have 1..{len(table)})")
    return pkpd.load_patient(spec)


def _resolve_e0(args, ds: pkpd.Dataset) -> float:
    if args.e0 is None:
        return float(ds.y[0])
    if abs(ds.y[0] - args.e0) > E0_CONFLICT_TOL:
        print(
            f"warning: --e0 {args.e0} differs from y(0)={ds.y[0]} "
            f"by more than {E0_CONFLICT_TOL}",
            file=sys.stderr,
        )
    return float(args.e0)


def _problem_config(args, ds: pkpd.Dataset) -> ProblemConfig:
    N, M = args.order
    return ProblemConfig(dataset=ds, N=N, M=M, E0=_resolve_e0(args, ds))


def _solver_config(args) -> SolverConfig:
    if getattr(args, "threads", 1) > 1:
        log.warning("parallel mode is not available; running single-threaded")
    return SolverConfig(
        epsilon=args.eps, epsilon_abs=args.eps_abs, max_nodes=args.max_nodes
    )


def cmd_simulate(args) -> int:
    try:
        patient = _resolve_patient(args.patient)
        profile = (
            pkpd.load_input_profile(args.input) if args.input else pkpd.BOLUS_INPUT
        )
        ds = pkpd.synthesize_dataset(patient, profile, args.period, args.horizon)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    pkpd.dataset_to_csv(ds, args.out)
    manifest = RunManifest(
        command="simulate",
        inputs={"patient": args.patient, "input": args.input or "<bundled bolus>"},
        config={"period": args.period, "horizon": args.horizon},
    )
    Path(str(args.out) + ".manifest.json").write_text(manifest.to_json() + "\n")
    print(f"wrote {ds.n + 1} samples to {args.out}")
    return 0


def _identify_one(config: ProblemConfig, b0: Box, solver: SolverConfig):
    if np.ptp(config.dataset.y) == 0.0:
        print("warning: constant output; any parameters fit exactly (degenerate)",
              file=sys.stderr)
    return bnb.identify(config, b0, solver)


def cmd_identify(args) -> int:
    solver = _solver_config(args)
    if args.all:
        return _identify_all(args, solver)
    if args.data is None:
        print("error: --data is required (or use --all)", file=sys.stderr)
        return 1
    try:
        ds = pkpd.dataset_from_csv(args.data)
        config = _problem_config(args, ds)
        result, adj, was_adjusted = _identify_one(config, args.box, solver)
    except (ValueError, wiener.InvertibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest = RunManifest(
        command="identify",
        inputs={"data": args.data},
        config={
            "N": config.N, "M": config.M, "E0": config.E0,
            "box": [args.box.lower.tolist(), args.box.upper.tolist()],
            "eps": solver.epsilon, "eps_abs": solver.epsilon_abs,
            "max_nodes": solver.max_nodes, "split_mode": solver.split_mode,
        },
    )
    out = {
        "gamma_hat": result.p_star[0],
        "emax_hat": result.p_star[1],
        "alpha": result.x_star[: config.N].tolist(),
        "beta": result.x_star[config.N :].tolist(),
        "objective": result.UB,
        "lb_count": result.lb_count,
        "nodes_split": result.nodes_split,
        "runtime_s": result.wall_time,
        "certificate": result.certificate,
        "adjusted_box": [adj.lower.tolist(), adj.upper.tolist()],
        "box_was_adjusted": was_adjusted,
        "manifest": json.loads(manifest.to_json()),
    }
    text = json.dumps(out, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if result.certificate else 2


def _identify_all(args, solver: SolverConfig) -> int:
    """Batch run over the bundled patient table; prints one row per patient."""
    all_certified = True
    print(f"{'Id':>3} {'N':>2} {'M':>2} {'min||e||^2':>12} {'#LBs':>8} "
          f"{'||p_hat - p*||':>14} {'cert':>5}")
    for pat in pkpd.load_patient_table():
        ds = pkpd.synthesize_dataset(pat, pkpd.BOLUS_INPUT, args.period, args.horizon)
        N, M = args.order
        config = ProblemConfig(dataset=ds, N=N, M=M)
        result, _, _ = _identify_one(config, args.box, solver)
        err = np.hypot(result.p_star[0] - pat.hill.gamma,
                       result.p_star[1] - pat.hill.emax)
        all_certified &= result.certificate
        print(f"{pat.id:>3} {N:>2} {M:>2} {result.UB:>12.5g} {result.lb_count:>8} "
              f"{err:>14.5g} {str(result.certificate):>5}")
    return 0 if all_certified else 2


def cmd_landscape(args) -> int:
    try:
        ds = pkpd.dataset_from_csv(args.data)
        config = _problem_config(args, ds)
        box, _ = wiener.adjust_box(config, args.box)
        grid_g, grid_e = args.grid
        gammas, emaxes, H = bnb.landscape(config, box, grid_g, grid_e)
    except (ValueError, wiener.InvertibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "emax", "h"])
        for i, g in enumerate(gammas):
            for j, e in enumerate(emaxes):
                w.writerow([repr(float(g)), repr(float(e)), repr(float(H[i, j]))])
    manifest = RunManifest(
        command="landscape",
        inputs={"data": args.data},
        config={
            "N": config.N, "M": config.M, "E0": config.E0,
            "box": [box.lower.tolist(), box.upper.tolist()],
            "grid": [grid_g, grid_e],
        },
    )
    Path(str(args.out) + ".manifest.json").write_text(manifest.to_json() + "\n")
    print(f"wrote {grid_g * grid_e} grid cells to {args.out}")
    return 0


def cmd_verify(args) -> int:
    ok = verify.run_suite(args.suite, seed=args.seed, trials=args.trials)
    print("all properties passed" if ok else "PROPERTY FAILURES detected")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="globid",
        description="Certified global identification of Wiener-model "
                    "Hill parameters from sampled dose-response data.",
    )
    parser.add_argument("--version", action="version", version=f"globid {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="synthesize a sampled dataset for a patient")
    p.add_argument("patient", help="bundled patient id (1-13) or patient JSON path")
    p.add_argument("input", nargs="?", default=None,
                   help="input-profile JSON path (default: bundled bolus profile)")
    p.add_argument("--period", type=float, default=1.0, help="sample period [s]")
    p.add_argument("--horizon", type=float, default=300.0, help="simulation length [s]")
    p.add_argument("--out", default="dataset.csv", help="output CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="globally identify Hill parameters")
    p.add_argument("--data", help="dataset CSV (t,u,y)")
    p.add_argument("--all", action="store_true",
                   help="batch-run all bundled patients on synthesized data")
    p.add_argument("--e0", type=float, default=None,
                   help="baseline effect E0 (default: y(0))")
    p.add_argument("--order", type=_parse_order, default=(2, 2),
                   help="ARX orders 'N' or 'N,M' (default 2)")
    p.add_argument("--box", type=_parse_box, default=_parse_box("1,8,40,160"),
                   help="search box 'g-,g+,e-,e+' (default 1,8,40,160)")
    p.add_argument("--eps", type=float, default=1e-3, help="relative tolerance")
    p.add_argument("--eps-abs", type=float, default=1e-12, help="absolute tolerance")
    p.add_argument("--max-nodes", type=int, default=500_000,
                   help="node budget before giving up the certificate")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (only 1 is currently supported)")
    p.add_argument("--period", type=float, default=1.0,
                   help="sample period for --all synthesis [s]")
    p.add_argument("--horizon", type=float, default=300.0,
                   help="horizon for --all synthesis [s]")
    p.add_argument("--out", default=None, help="result JSON path (default: stdout only)")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("landscape", help="export the log-objective surface on a grid")
    p.add_argument("--data", required=True, help="dataset CSV (t,u,y)")
    p.add_argument("--e0", type=float, default=None)
    p.add_argument("--order", type=_parse_order, default=(2, 2))
    p.add_argument("--box", type=_parse_box, default=_parse_box("1,8,40,160"))
    p.add_argument("--grid", type=_parse_grid, default=(50, 50), help="grid 'GxH'")
    p.add_argument("--out", default="landscape.csv", help="output CSV path")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("verify", help="run a randomized property suite")
    p.add_argument("--suite", choices=sorted(verify.SUITES), required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
