"""``msense`` command-line interface."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import bound_report, coherence_report
from .harness import ExperimentConfig, contour50, emit, resolve_threads, run_phase_transition
from .io import (
    load_matrix_csv,
    load_partition,
    load_profiles,
    load_vector_csv,
    save_ensemble,
    save_partition,
    save_profiles,
    save_vector_csv,
    write_json,
    write_sidecar,
)
from .profiles import (
    banded_profiles,
    dft_isometry,
    joint_isometry_residual,
    piecewise_constant_profiles,
    random_isometry,
    upsilon,
)
from .levels import LevelPartition
from .sampling import RowDistribution, assemble_distinct, assemble_identical, matrix_distribution
from .solver import SolverOptions, basis_pursuit

EXIT_FAIL = 1
EXIT_USAGE = 2


def _args_record(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _report(doc: dict, args) -> None:
    """Print JSON to stdout; also write it (with a sidecar) when --out is set."""
    print(json.dumps(doc, indent=2, sort_keys=True))
    if getattr(args, "out", None):
        write_json(args.out, doc)
        write_sidecar(args.out, _args_record(args))


def _load_inputs(args):
    profiles = load_profiles(args.profiles, getattr(args, "mode", None))
    partition = load_partition(args.partition)
    return profiles, partition


def cmd_phase_transition(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    threads = resolve_threads(args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(done, total):
        if args.verbose:
            print(f"cell {done}/{total}", file=sys.stderr)

    grid = run_phase_transition(config, threads=threads, progress=progress)
    curves = contour50(grid)
    record = config.to_dict()
    written = []
    for name, obj, fmt in [("grid.csv", grid, "csv"), ("grid.json", grid, "json"),
                           ("contour.csv", curves, "csv"), ("contour.json", curves, "json"),
                           ("contour.svg", curves, "svg-polyline")]:
        emit(obj, fmt, out / name)
        written.append(out / name)
    if not args.no_plots:
        from .plotting import plot_contours, plot_phase_grid

        plot_phase_grid(grid, out / "phase_grid.png")
        plot_contours(curves, out / "contours.png", title=f"{config.mode} sampling")
        written += [out / "phase_grid.png", out / "contours.png"]
    for path in written:
        write_sidecar(path, record, threads=threads)
    print("C,m,s_star,flag")
    for C, pts in curves.items():
        for p in pts:
            print(f"{C},{p.m},{p.s_star:.4g},{p.flag}")
    return 0


def cmd_make_profiles(args) -> int:
    if args.family == "banded":
        profiles, partition = banded_profiles(args.C, args.N, args.r1, args.r2, shape=args.shape,
                                              mode=args.mode, D=args.levels, leak=args.leak,
                                              strict=not args.allow_uneven)
    else:
        D = args.levels or args.C
        partition = LevelPartition.contiguous(args.N, D, strict=not args.allow_uneven)
        if args.isometry == "dft":
            V = dft_isometry(args.C, D)
        else:
            V = random_isometry(args.C, D, np.random.default_rng(args.seed))
        profiles = piecewise_constant_profiles(V, partition, args.mode)
    save_profiles(profiles, args.out)
    write_sidecar(args.out, _args_record(args))
    if args.partition_out:
        save_partition(partition, args.partition_out)
        write_sidecar(args.partition_out, _args_record(args))
    return 0


def cmd_upsilon(args) -> int:
    profiles, partition = _load_inputs(args)
    doc = {"mode": profiles.mode, "C": profiles.C, "N": profiles.N, "D": partition.D,
           "upsilon": upsilon(profiles, partition)}
    _report(doc, args)
    return 0


def cmd_check_isometry(args) -> int:
    if args.isometry:
        V = load_matrix_csv(args.isometry)
        residual = float(np.max(np.abs(V.conj().T @ V - np.eye(V.shape[1]))))
        doc = {"kind": "isometry", "shape": list(V.shape), "residual": residual, "tol": args.tol,
               "ok": residual <= args.tol}
    else:
        profiles = load_profiles(args.profiles, args.mode)
        residual = joint_isometry_residual(profiles)
        doc = {"kind": "profiles", "mode": profiles.mode, "C": profiles.C, "N": profiles.N,
               "residual": residual, "tol": args.tol, "ok": residual <= args.tol}
    _report(doc, args)
    return 0 if doc["ok"] else EXIT_FAIL


def cmd_assemble(args) -> int:
    profiles = load_profiles(args.profiles, args.mode)
    dist = RowDistribution(args.distribution, profiles.N)
    if profiles.mode == "distinct":
        ens = assemble_distinct(profiles, dist, args.m, allocation=args.allocation, seed=args.seed)
    else:
        ens = assemble_identical(profiles, dist, args.m, seed=args.seed)
    save_ensemble(ens, args.out)
    return 0


def cmd_recover(args) -> int:
    A = load_matrix_csv(args.matrix)
    y = load_vector_csv(args.y)
    opts = SolverOptions(eta=args.eta, max_iterations=args.max_iterations)
    res = basis_pursuit(A, y, opts)
    save_vector_csv(res.x_hat, args.out)
    summary = {"converged": res.converged, "iterations": res.iterations,
               "residual_norm": res.residual_norm, "objective": res.objective, "gap": res.gap}
    write_sidecar(args.out, _args_record(args), result=summary)
    print(json.dumps(summary, sort_keys=True))
    return 0 if res.converged else EXIT_FAIL


def cmd_coherence(args) -> int:
    profiles, partition = _load_inputs(args)
    F = matrix_distribution(profiles, kind=args.distribution)
    delta = [int(j) - 1 for j in args.delta.split(",")]
    est = coherence_report(F, partition, delta, lam=args.lam, budget=args.budget,
                           z_budget=args.z_budget, seed=args.seed)
    doc = est.to_dict()
    doc["delta"] = [j + 1 for j in doc["delta"]]
    doc["index_base"] = 1
    _report(doc, args)
    return 0


def cmd_bound(args) -> int:
    ups = args.upsilon
    if ups is None:
        if not (args.profiles and args.partition):
            raise ValueError("give --upsilon or both --profiles and --partition")
        ups = upsilon(*_load_inputs(args))
    _report(bound_report(args.N, args.s, args.epsilon, args.lam, args.mu, ups).to_dict(), args)
    return 0


def _mode_arg(p, required=False):
    p.add_argument("--mode", choices=["distinct", "identical"], required=required,
                   help="override the mode stored with the profiles")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msense", description=__doc__)
    parser.add_argument("--version", action="version", version=f"msense {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phase-transition", help="run a phase-transition sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $MSENSE_THREADS or 1)")
    p.add_argument("--seed", type=int, default=None, help="override master_seed (u64)")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_phase_transition)

    p = sub.add_parser("make-profiles", help="write a profile set and its level partition")
    p.add_argument("--family", choices=["banded", "piecewise-constant"], required=True)
    p.add_argument("--C", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    _mode_arg(p, required=True)
    p.add_argument("--levels", type=int, default=None, help="number of levels D")
    p.add_argument("--r1", type=int, default=1)
    p.add_argument("--r2", type=int, default=0)
    p.add_argument("--shape", choices=["smooth-overlap", "flat"], default="smooth-overlap")
    p.add_argument("--leak", type=float, default=0.1)
    p.add_argument("--isometry", choices=["dft", "random"], default="dft")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--allow-uneven", action="store_true",
                   help="allow level sizes that differ by one when D does not divide N")
    p.add_argument("--out", required=True)
    p.add_argument("--partition-out", default=None)
    p.set_defaults(func=cmd_make_profiles)

    p = sub.add_parser("upsilon", help="profile factor for the stored mode")
    p.add_argument("--profiles", required=True)
    p.add_argument("--partition", required=True)
    _mode_arg(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_upsilon)

    p = sub.add_parser("check-isometry", help="joint isometry of profiles, or V^*V = I")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--profiles")
    src.add_argument("--isometry", help="CSV matrix V (re,im interleaved)")
    _mode_arg(p)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check_isometry)

    p = sub.add_parser("assemble", help="draw a measurement matrix")
    p.add_argument("--profiles", required=True)
    _mode_arg(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--distribution", choices=list(RowDistribution.KINDS), default="fourier")
    p.add_argument("--allocation", choices=["equal-split", "random-mixture"],
                   default="equal-split")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("recover", help="basis pursuit; exit 0 when converged")
    p.add_argument("--matrix", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--max-iterations", type=int, default=20000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("coherence", help="local coherence of a support set")
    p.add_argument("--profiles", required=True)
    p.add_argument("--partition", required=True)
    _mode_arg(p)
    p.add_argument("--delta", required=True, help="comma-separated 1-based indices")
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--distribution", choices=list(RowDistribution.KINDS), default="fourier")
    p.add_argument("--budget", type=int, default=None, help="Monte Carlo draws for gamma1")
    p.add_argument("--z-budget", type=int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_coherence)

    p = sub.add_parser("bound", help="log factor L and the measurement-count proxy")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--upsilon", type=float, default=None)
    p.add_argument("--profiles", default=None)
    p.add_argument("--partition", default=None)
    _mode_arg(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bound)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"msense: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
