"""Command line entry point.

Exit codes: 0 success, 1 validation or usage error, 2 runtime error
(including failed property checks in ``lemma-check``).
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, harness
from .estimator import TrajectoryRecord
from .exceptions import ValidationError
from .graph import build_metropolis, laplacian_spectrum, load_edgelist


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _overrides(args):
    return {"seed": args.seed, "steps": args.steps, "runs": args.runs}


def cmd_simulate(args):
    overrides = _overrides(args)
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["outputs"] = args.out
    config = harness.load_config(args.config, overrides)
    out_dir = Path(config.outputs)
    if not out_dir.is_absolute() and args.out is None:
        out_dir = Path(config.base_dir) / out_dir
    result = harness.run_experiment(config)
    files = harness.emit_outputs(result, out_dir)
    print(harness.summarize(result), end="")
    print(f"wrote {', '.join(files)} to {out_dir}")
    return 0


def cmd_diagnose(args):
    traj = TrajectoryRecord.from_csv(args.trajectory)
    rep = analysis.excitation_report(traj, N_user=args.N, stride=args.stride, full=args.full)
    trace = analysis.noise_accumulation_trace(traj)
    print(rep.summary())
    half = traj.steps // 2
    print(f"noise partial sum |S_K| = {trace.norms[-1]:.6g}; "
          f"tail oscillation after k={half + 1}: {trace.tail[half]:.6g}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rep.to_csv(out / "excitation.csv")
        lines = ["k,S_norm,tail"] + [
            f"{k + 1},{trace.norms[k]!r},{trace.tail[k]!r}" for k in range(traj.steps)]
        (out / "noise_trace.csv").write_text("\n".join(lines) + "\n")
        (out / "diagnose_summary.txt").write_text(rep.summary() + "\n")
    return 0


def cmd_lemma_check(args):
    config = harness.load_config(args.config, {})
    instances = args.runs or 100
    steps = args.steps or 30
    seed = args.seed if args.seed is not None else config.seed
    results = analysis.lemma_sweep(config.n, config.m, mu=config.mu, nu=config.nu,
                                   instances=instances, steps=steps, seed=seed)
    ok = True
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'}  {res.name}: {res.detail}")
        ok &= res.passed
    return 0 if ok else 2


def cmd_graph(args):
    topo = load_edgelist(args.edgelist, n=args.n)
    w = build_metropolis(topo)
    spec = laplacian_spectrum(w, topo)
    print(f"nodes: {topo.n}, edges: {len(topo.edges)}")
    print(f"connected: {spec.connected}")
    print(f"diameter: {spec.diameter if spec.connected else 'undefined'}")
    print("eigenvalues: " + ", ".join(f"{v:.12g}" for v in np.where(np.abs(spec.eigenvalues) < 1e-12, 0.0, spec.eigenvalues)))
    print(f"l2: {spec.l2:.12g}")
    return 0


def build_parser():
    parser = _Parser(prog="distsg", description="Distributed SG estimation simulator and diagnostics")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--runs", type=int)

    p = sub.add_parser("simulate", help="run the Monte Carlo comparison and write outputs")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="excitation and noise diagnostics of a trajectory CSV")
    p.add_argument("trajectory")
    p.add_argument("--N", type=float, help="use this excitation constant instead of fitting one")
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--full", action="store_true", help="evaluate every step")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("lemma-check", help="random-instance sweeps of the operator inequalities")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_lemma_check)

    p = sub.add_parser("graph", help="spectrum and diameter of an edge list")
    p.add_argument("edgelist")
    p.add_argument("--n", type=int, help="node count (default: header or largest index)")
    common(p)
    p.set_defaults(func=cmd_graph)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
