"""Command-line interface.

``hadfact decompose`` factors one matrix file (.mtx/.csv/.hdmat/.pgm) and
writes the four factor files, a JSON summary with error/r_star/q_star and
timings, and optionally the dense reconstruction.

``hadfact bench`` runs an experiment spec file or one of the built-in
synthetic protocols (--table1 ablation, --table2 comparison) and writes
CSV + JSON reports.

Exit codes: 0 success (a summary warning flags budget-exhausted runs);
2 unparsable/missing inputs or spec schema violations; 3 a face-splitting
initialization was requested but r^2 > min(m, n).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import bench as bench_mod
from .baselines import bcd, scaled_gd
from .bench import SpecError, parse_spec_file, run_experiment, r_star, q_star
from .core import frobenius_norm
from .initializers import INIT_NAMES, available_inits, get_init
from .io import MatrixIOError, load_matrix, write_hdmat, write_pgm
from .solvers import SolverConfig, manbcd, projbcd
from .standard import DENSIFY_GUARD, rgd_standard

ALGO_ALL = ["projbcd", "manbcd", "bcd", "rgd"]  # scaledgd only when asked for
RUNNERS = {
    "projbcd": projbcd,
    "manbcd": manbcd,
    "bcd": bcd,
    "rgd": rgd_standard,
    "scaledgd": scaled_gd,
}


def _split_choice(value: str, universe, label: str, all_value):
    """Split a comma list; 'all' expands to all_value (None = decide later)."""
    names = [v.strip() for v in value.split(",") if v.strip()]
    if "all" in names:
        return list(all_value) if all_value is not None else None
    for name in names:
        if name not in universe:
            raise argparse.ArgumentTypeError(f"unknown {label} '{name}'")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hadfact",
                                     description="Hadamard decomposition toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    dec = sub.add_parser("decompose", help="factor one matrix file")
    dec.add_argument("--input", required=True, help="matrix file (.mtx/.csv/.hdmat/.pgm)")
    dec.add_argument("--rank", required=True, type=int)
    dec.add_argument("--algo", default="projbcd",
                     help="comma list of projbcd|manbcd|bcd|rgd|scaledgd, or 'all'")
    dec.add_argument("--init", default="all",
                     help="comma list of svd|fs|fsl|fsr, or 'all'")
    dec.add_argument("--time-limit", type=float, default=None, help="seconds per run")
    dec.add_argument("--max-iters", type=int, default=10_000)
    dec.add_argument("--tol", type=float, default=1e-12)
    dec.add_argument("--tau", type=float, default=0.95)
    dec.add_argument("--kw", type=int, default=2)
    dec.add_argument("--kh", type=int, default=2)
    dec.add_argument("--beta0", type=float, default=None,
                     help="initial extrapolation parameter (default 0.25, bcd 0.75)")
    dec.add_argument("--seed", type=int, default=0)
    dec.add_argument("--output-dir", default="hadfact_out")
    dec.add_argument("--emit-reconstruction", action="store_true")

    ben = sub.add_parser("bench", help="run benchmark experiments")
    ben.add_argument("--spec", help="experiment spec file")
    ben.add_argument("--table1", action="store_true", help="ablation protocol preset")
    ben.add_argument("--table2", action="store_true", help="synthetic comparison preset")
    ben.add_argument("--size", type=int, default=400)
    ben.add_argument("--samples", type=int, default=10)
    ben.add_argument("--budget", type=float, default=None, help="seconds per initialization")
    ben.add_argument("--ranks", default=None, help="comma list, e.g. 10,15,20")
    ben.add_argument("--algos", default=None, help="override preset algorithm list")
    ben.add_argument("--inits", default=None, help="override preset initialization list")
    ben.add_argument("--seed", type=int, default=0, help="first seed of the sample range")
    ben.add_argument("--output-dir", default="hadfact_bench")
    return parser


def _decompose_config(args, algo: str) -> SolverConfig:
    beta0 = args.beta0 if args.beta0 is not None else (0.75 if algo == "bcd" else 0.25)
    return SolverConfig(
        tau=args.tau, k_w=args.kw, k_h=args.kh, max_iters=args.max_iters,
        time_limit=args.time_limit, tol=args.tol, beta0=beta0,
    )


def cmd_decompose(args) -> int:
    try:
        X = load_matrix(args.input)
    except MatrixIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        algos = _split_choice(args.algo, RUNNERS, "algorithm", ALGO_ALL)
        explicit_inits = _split_choice(args.init, INIT_NAMES, "initialization", None)
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    m, n = X.shape
    r = args.rank
    avail = available_inits(m, n, r)
    if explicit_inits is None:  # 'all'
        inits = avail
    else:
        missing = [name for name in explicit_inits if name not in avail]
        if missing:
            print(
                f"error: initialization(s) {','.join(missing)} need r^2 <= min(m, n) "
                f"= {min(m, n)} (r={r}); available: {','.join(avail)}",
                file=sys.stderr,
            )
            return 3
        inits = explicit_inits

    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    runs, failed, warnings_list = [], [], []
    best = None
    for algo in algos:
        config = _decompose_config(args, algo)
        for init_name in inits:
            try:
                factors = get_init(init_name, X, r)
                record = RUNNERS[algo](X, r, factors, config)
            except (ValueError, RuntimeError) as exc:
                failed.append({"algo": algo, "init": init_name, "error": str(exc)})
                continue
            record.init_label = init_name
            entry = {
                "algo": algo,
                "init": init_name,
                "rel_error": record.best_error,
                "elapsed_s": record.times[-1] if record.times else 0.0,
                "iterations": record.iterations,
                "stop_reason": record.stop_reason,
                "accepted_iterations": int(sum(record.accepted[1:])),
            }
            if not record.any_accepted and record.iterations > 0:
                entry["warning"] = "budget exhausted without an accepted iteration"
                warnings_list.append(f"{algo}/{init_name}: no accepted iteration")
            runs.append(entry)
            if best is None or record.best_error < best[0].best_error:
                best = (record, algo, init_name)
            print(f"{algo:8s} {init_name:4s} error={record.best_error:.6e} "
                  f"iters={record.iterations} ({record.stop_reason})")

    if best is None:
        print("error: every run failed", file=sys.stderr)
        for item in failed:
            print(f"  {item['algo']}/{item['init']}: {item['error']}", file=sys.stderr)
        return 1

    record, best_algo, best_init = best
    f = record.factors
    for name, mat in (("W1", f.W1), ("H1", f.H1), ("W2", f.W2), ("H2", f.H2)):
        write_hdmat(outdir / f"{name}.hdmat", mat)

    # report the error of the factors as written, so re-reading them
    # reproduces the summary value exactly
    best_error = f.relative_error(X)
    rs = r_star(X, r, min(best_error, 1.0))
    summary = {
        "input": str(args.input),
        "shape": [int(m), int(n)],
        "rank": r,
        "norm": frobenius_norm(X),
        "runs": runs,
        "failed": failed,
        "best": {"algo": best_algo, "init": best_init, "rel_error": best_error},
        "r_star": rs,
        "q_star_pct": 100.0 * q_star(rs, r),
        "total_seconds": time.perf_counter() - t_start,
        "warnings": warnings_list,
    }
    if args.emit_reconstruction:
        if m * n > DENSIFY_GUARD:
            warnings_list.append("reconstruction skipped: matrix too large to densify")
        else:
            recon = record.factors.reconstruct()
            if Path(args.input).suffix.lower() == ".pgm":
                write_pgm(outdir / "reconstruction.pgm", recon)
            else:
                write_hdmat(outdir / "reconstruction.hdmat", recon)
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"best: {best_algo}/{best_init} error={best_error:.6e} "
          f"r_star={rs} q_star={100.0 * q_star(rs, r):.2f}%  -> {outdir}")
    return 0


def cmd_bench(args) -> int:
    ranks = None
    if args.ranks:
        try:
            ranks = [int(v) for v in args.ranks.split(",") if v.strip()]
        except ValueError:
            print(f"error: --ranks must be integers, got {args.ranks!r}", file=sys.stderr)
            return 2
    algos = [a.strip() for a in args.algos.split(",")] if args.algos else None
    inits = [i.strip() for i in args.inits.split(",")] if args.inits else None

    try:
        if args.spec:
            specs = [parse_spec_file(args.spec)]
            for spec in specs:
                if spec.output is None:
                    spec.output = args.output_dir
                if ranks:
                    spec.ranks = ranks
                if algos:
                    spec.algos = algos
                if inits:
                    spec.inits = inits
                if args.budget is not None:
                    spec.budget = args.budget
        elif args.table1:
            specs = [bench_mod.table1_spec(
                size=args.size, samples=args.samples,
                budget=args.budget if args.budget is not None else 10.0,
                ranks=ranks, output=args.output_dir)]
            if algos:
                specs[0].algos = algos
            if inits:
                specs[0].inits = inits
        elif args.table2:
            specs = bench_mod.table2_spec(
                size=args.size, samples=args.samples, budget=args.budget,
                ranks=ranks, algos=algos, inits=inits)
        else:
            print("error: one of --spec/--table1/--table2 is required", file=sys.stderr)
            return 2
        for spec in specs:
            spec.seeds = [args.seed + s for s in range(len(spec.seeds))]

        all_reports = []
        outdir = Path(args.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        for idx, spec in enumerate(specs):
            if len(specs) > 1:
                spec.output = str(outdir / f"{spec.data}")
            elif spec.output is None:
                spec.output = str(outdir)
            reports, _ = run_experiment(spec)
            all_reports.extend(reports)
            for rep in reports:
                print(rep.csv_row())
        bench_mod.write_reports_csv(outdir / "all_reports.csv", all_reports)
        print(f"{len(all_reports)} reports -> {outdir}")
        return 0
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MatrixIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "decompose":
        return cmd_decompose(args)
    return cmd_bench(args)


if __name__ == "__main__":
    sys.exit(main())
