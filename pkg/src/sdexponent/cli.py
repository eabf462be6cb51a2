"""Command-line front end: exponent curves, simulations, verification suites, code generation.

Exit codes: 0 on success (or all suites passing), 1 when a verification
suite fails, 2 on usage errors.
"""

import argparse
import json
import sys

import numpy as np

from . import exponent as ex
from .codes import CodeSpec, dft_matrix, threaded_generator
from .montecarlo import ExperimentConfig, Table, error_and_gap, format_table, tail_probability
from .sphere import SearchPolicy
from .verify import SUITES, VerificationCapError, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _grid(text):
    try:
        return ex.parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _complex(text):
    try:
        return complex(text.replace(" ", ""))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from exc


def _radius(text):
    if text in ("se", "inf"):
        return text, None
    if text.startswith("fixed:"):
        try:
            z = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad radius {text!r}") from exc
        if z <= 0:
            raise argparse.ArgumentTypeError("z must be positive")
        return "fixed", z
    if text == "fixed":
        return "fixed", None
    raise argparse.ArgumentTypeError("radius must be fixed[:z], se or inf")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global random seed")
    common.add_argument("--out", default=None, help="output file (default: standard output)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")
    common.add_argument("--jobs", type=int, default=1, help="worker processes; never changes results")

    parser = argparse.ArgumentParser(prog="sdexponent", description=__doc__.splitlines()[0],
                                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exponent", parents=[common], formatter_class=fmt,
                       help="SD complexity exponent bound over a grid of multiplexing gains")
    p.add_argument("--nt", type=int, default=2, help="transmit antennas")
    p.add_argument("--nr", type=int, default=None, help="receive antennas (default: nt)")
    p.add_argument("-T", type=int, default=None, dest="T", help="block length (default: nt)")
    d = p.add_mutually_exclusive_group()
    d.add_argument("--dmt-optimal", action="store_true",
                   help="use the DMT-optimal diversity (nt-k)(nr-k); the default")
    d.add_argument("--d-table", default=None,
                   help="CSV file of r,d breakpoints for a piecewise-linear diversity")
    d.add_argument("--d", type=float, default=None, help="constant diversity budget")
    p.add_argument("--grid", type=_grid, default=None, help="r grid lo:hi:step (default 0:nt:0.05)")
    p.add_argument("--preset", choices=("threaded", "fastdec"), default=None,
                   help="emit threaded-code curves for n=2..6, or the 2x2 fast-decodable comparison")

    p = sub.add_parser("simulate", parents=[common], formatter_class=fmt,
                       help="Monte Carlo node-count tails, or ML gap when --budget-exp is given")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--code", default=None, help="CodeSpec JSON file")
    src.add_argument("--threaded", type=int, default=2, help="default threaded code of this size")
    p.add_argument("--r", type=float, default=1.0, help="multiplexing gain")
    p.add_argument("--snr-db", type=_float_list, default=[10.0, 15.0, 20.0], help="comma-separated SNRs in dB")
    p.add_argument("--trials", type=int, default=1000, help="trials per SNR")
    p.add_argument("--x", type=_float_list, default=[0.0, 0.5, 1.0, 1.5, 2.0],
                   help="comma-separated complexity exponents for P(N >= rho^x)")
    p.add_argument("--budget-exp", type=float, default=None,
                   help="node budget rho^x; switches the output to the error/gap table")
    p.add_argument("--radius", type=_radius, default=("fixed", None),
                   help="fixed[:z] (z defaults to d(r)+1), se, or inf")
    p.add_argument("--dump-traces", default=None, help="write per-search JSON lines here")

    p = sub.add_parser("verify", parents=[common], formatter_class=fmt,
                       help="run verification suites and print verdict JSON")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all", help="suite to run")
    p.add_argument("--code", action="append", default=None,
                   help="CodeSpec JSON for the rank and nvd suites (repeatable); "
                        "default: threaded codes n=2,3 for rank, nvd skipped")
    p.add_argument("--trials", type=int, default=None,
                   help="trials per suite (default 1000, or 100 for rank)")
    p.add_argument("--nvd-bound", type=int, default=1, help="symbol bound for the determinant probe")

    p = sub.add_parser("codegen", parents=[common], formatter_class=fmt,
                       help="write a threaded-code CodeSpec as JSON")
    p.add_argument("--threaded", type=int, required=True, help="code size n (nt = T = n)")
    p.add_argument("--gamma", type=_complex, default=None, help="thread scalar (default exp(i*pi/(2n)))")
    p.add_argument("--C", default="dft", dest="C",
                   help="'dft' or a JSON file holding an n x n matrix of [re, im] pairs")
    p.add_argument("--nr", type=int, default=None, help="receive antennas (default n)")
    p.add_argument("--name", default=None, help="code name")
    return parser


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _load_d_table(path):
    table = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line[0].isalpha():
                continue
            r, d = (float(v) for v in line.split(",")[:2])
            table.append((r, d))
    return ex.DiversityModel.explicit(table)


def cmd_exponent(args):
    if args.preset == "threaded":
        return Table("threaded_curves", ["n", "r", "c"], ex.threaded_preset_rows())
    if args.preset == "fastdec":
        grid = args.grid or ex.parse_grid("0:2:0.05")
        return Table("fastdec_curves", ["r", "regular_sd_worst", "simplified_sd_worst", "c"],
                     ex.fastdec_comparison_curves(grid))
    nt = args.nt
    nr = args.nr if args.nr is not None else nt
    T = args.T if args.T is not None else nt
    if nt < 1 or T < 1 or nr < nt:
        raise UsageError("need nt >= 1, T >= 1 and nr >= nt")
    grid = args.grid or ex.parse_grid(f"0:{nt}:0.05")
    if any(r < 0 or r > nt for r in grid):
        raise UsageError(f"grid must lie within [0, {nt}]")
    if args.d is not None:
        if args.d < 0:
            raise UsageError("--d must be nonnegative")
        diversity = args.d
    elif args.d_table is not None:
        diversity = _load_d_table(args.d_table)
    else:
        diversity = ex.DiversityModel.dmt_optimal(nt, nr)
    return ex.exponent_curve(grid, nt, nr, T, diversity)


def _spec_from_args(args):
    if args.code is not None:
        return CodeSpec.load(args.code)
    return threaded_generator(args.threaded)


def cmd_simulate(args):
    spec = _spec_from_args(args)
    mode, z = args.radius
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if not 0 <= args.r <= spec.nt:
        raise UsageError(f"--r must be in [0, {spec.nt}]")
    cfg = ExperimentConfig(spec, args.r, args.snr_db, args.x, trials=args.trials, z=z,
                           seed=args.seed, jobs=args.jobs)
    if mode == "se":
        cfg.policy = SearchPolicy("adaptive_se", z=None)
    elif mode == "inf":
        cfg.policy = SearchPolicy("infinite")
    if args.budget_exp is not None:
        cfg.x_list = [args.budget_exp]
        result = error_and_gap(cfg, keep_records=bool(args.dump_traces))
        records = getattr(result, "records", {})
    else:
        result = tail_probability(cfg, keep_records=bool(args.dump_traces))
        records = result.records
    if args.dump_traces:
        with open(args.dump_traces, "w") as fh:
            for snr_db, recs in records.items():
                for t, rec in enumerate(recs):
                    fh.write(json.dumps({
                        "seed": args.seed, "snr_db": snr_db, "trial": t,
                        "nodes_per_layer": [int(n) for n in rec.nodes_per_layer],
                        "total_nodes": int(rec.n_nodes), "outcome": rec.outcome,
                    }, sort_keys=True) + "\n")
    return result


def cmd_verify(args):
    suites = list(SUITES) if args.suite == "all" else [args.suite]
    specs = [CodeSpec.load(path) for path in args.code] if args.code else None
    verdicts, skipped = [], []
    for name in suites:
        if name in ("rank", "nvd"):
            targets = specs
            if targets is None:
                if name == "nvd":
                    skipped.append({"suite": "nvd", "reason": "needs --code with nt == T"})
                    continue
                targets = [threaded_generator(2), threaded_generator(3)]
            for spec in targets:
                if name == "nvd" and spec.nt != spec.T:
                    skipped.append({"suite": "nvd", "code": spec.name, "reason": "nt != T"})
                    continue
                try:
                    results = run_suite(name, spec, args.trials, args.seed, args.nvd_bound)
                except VerificationCapError as exc:
                    skipped.append({"suite": name, "code": spec.name, "reason": str(exc)})
                    continue
                for v in results:
                    v.suite = f"{v.suite}:{spec.name}"
                    verdicts.append(v)
        else:
            verdicts.extend(run_suite(name, None, args.trials, args.seed))
    report = {"passed": all(v.passed for v in verdicts),
              "verdicts": [v.to_dict() for v in verdicts], "skipped": skipped}
    return report


def cmd_codegen(args):
    n = args.threaded
    if n < 1:
        raise UsageError("--threaded must be >= 1")
    if args.C == "dft":
        C = dft_matrix(n)
    else:
        with open(args.C) as fh:
            C = np.array([[complex(re, im) for re, im in row] for row in json.load(fh)])
    return threaded_generator(n, args.gamma, C, nr=args.nr, name=args.name)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        if args.command == "exponent":
            _write(format_table(cmd_exponent(args), args.format), args.out)
        elif args.command == "simulate":
            _write(format_table(cmd_simulate(args), args.format), args.out)
        elif args.command == "verify":
            report = cmd_verify(args)
            _write(json.dumps(report, sort_keys=True, indent=1) + "\n", args.out)
            return EXIT_OK if report["passed"] else EXIT_FAIL
        elif args.command == "codegen":
            _write(cmd_codegen(args).dumps() + "\n", args.out)
    except (UsageError, ValueError, OSError) as exc:
        print(f"sdexponent {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
