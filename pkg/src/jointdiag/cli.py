"""Command line interface: ``jointdiag gen | solve | bench | export-text``."""

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import __version__, io
from .core import DomainError, validate_spd
from .data import (GENERATOR_NAME, SynthConfig, covariances_from_segments,
                   gen_segment_signals, gen_synthetic, whitener)
from .solver import (CONVERGED, GRADIENT_DESCENT, LINE_SEARCH_FAILED,
                     MAX_ITER_REACHED, QUASI_NEWTON, SolverConfig, solve)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MAX_ITER = 3
EXIT_LINE_SEARCH = 4
EXIT_NOT_SPD = 5

STATUS_EXIT = {
    CONVERGED: EXIT_OK,
    MAX_ITER_REACHED: EXIT_MAX_ITER,
    LINE_SEARCH_FAILED: EXIT_LINE_SEARCH,
}

METHOD_NAMES = {"qn": QUASI_NEWTON, "gd": GRADIENT_DESCENT}

# Experiments (a) and (b): exactly diagonalizable, then with noise.
DEFAULT_BENCH_SPECS = ("synth:n=100,p=40,sigma=0", "synth:n=100,p=40,sigma=0.1")

SUMMARY_COLUMNS = ("dataset", "method", "seed", "status", "iterations",
                   "iters_to_tol", "init_time_s", "solve_time_s", "io_time_s",
                   "final_loss", "final_grad_norm", "trace_file", "error")


def _err(msg):
    print("jointdiag: %s" % msg, file=sys.stderr)


def _nonneg_float(s):
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be >= 0, got %s" % s)
    return v


def _pos_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0, got %s" % s)
    return v


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1, got %s" % s)
    return v


def _methods(s):
    names = [m.strip() for m in s.split(",") if m.strip()]
    bad = [m for m in names if m not in METHOD_NAMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            "methods must be a comma-separated subset of qn,gd")
    return names


def parse_dataset_spec(spec):
    """Parse ``kind:key=value,...`` with kind ``synth`` or ``segments``."""
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError("bad dataset parameter %r in %r" % (item, spec))
        params[key.strip()] = value.strip()
    if kind == "synth":
        allowed = {"n", "p", "sigma"}
        conv = {"n": int, "p": int, "sigma": float}
    elif kind == "segments":
        allowed = {"n", "p", "length", "noise"}
        conv = {"n": int, "p": int, "length": int, "noise": float}
    else:
        raise ValueError("unknown dataset kind %r in %r" % (kind, spec))
    unknown = set(params) - allowed
    if unknown:
        raise ValueError("unknown parameters %s in %r" % (sorted(unknown), spec))
    if not {"n", "p"} <= set(params):
        raise ValueError("dataset spec %r needs n and p" % spec)
    return kind, {k: conv[k](v) for k, v in params.items()}


def build_dataset(kind, params, seed):
    if kind == "synth":
        cset, _ = gen_synthetic(SynthConfig(params["n"], params["p"],
                                            params.get("sigma", 0.0), seed))
        return cset
    segments = gen_segment_signals(params["n"], params["p"],
                                   params.get("length", 10 * params["p"]),
                                   seed=seed, noise=params.get("noise", 0.1))
    return covariances_from_segments(segments)


def _run(cset, method, max_iter, tol, max_halvings):
    t0 = time.perf_counter()
    b0 = whitener(cset)
    whiten_time = time.perf_counter() - t0
    config = SolverConfig(max_iter=max_iter, grad_tol=tol,
                          max_halvings=max_halvings, method=METHOD_NAMES[method])
    result = solve(cset, b0, config)
    result.trace.init_time += whiten_time
    return result


def _metadata(method, n, p, status, seed=None, sigma=None, source=None):
    return {
        "method": METHOD_NAMES[method],
        "seed": seed,
        "n": n,
        "p": p,
        "sigma": sigma,
        "status": status,
        "generator": GENERATOR_NAME,
        "version": __version__,
        "source": source,
    }


def cmd_gen(args):
    config = SynthConfig(args.n, args.p, args.sigma, args.seed)
    cset, truth = gen_synthetic(config)
    try:
        io.save_mset(args.out, cset)
    except OSError as e:
        _err("cannot write %s: %s" % (args.out, e))
        return EXIT_USAGE
    print("n=%d p=%d sigma=%g seed=%d generator=%s" % (
        config.n, config.p, config.sigma, config.seed, truth.generator),
        file=sys.stderr)
    print("cond(A)=%.6g mixing_redraws=%d diagonal_redraws=%d" % (
        truth.condition_number, truth.mixing_redraws, truth.diag_redraws),
        file=sys.stderr)
    return EXIT_OK


def cmd_solve(args):
    try:
        cset = io.load_matrix_set(args.input)
    except (OSError, ValueError) as e:
        _err("cannot read %s: %s" % (args.input, e))
        return EXIT_USAGE
    report = validate_spd(cset)
    if not report.all_positive_definite:
        _err("matrices not positive definite: %s"
             % " ".join(str(i) for i in report.failed))
        return EXIT_NOT_SPD
    try:
        result = _run(cset, args.method, args.max_iter, args.tol,
                      args.max_halvings)
    except DomainError as e:
        _err(str(e))
        return EXIT_NOT_SPD
    meta = _metadata(args.method, cset.n, cset.p, result.status,
                     source=os.fspath(args.input))
    try:
        if args.trace_out:
            io.write_trace(args.trace_out, result.trace, meta)
        if args.b_out:
            io.save_mset(args.b_out, result.b.b)
    except OSError as e:
        _err("cannot write output: %s" % e)
        return EXIT_USAGE
    print("status=%s iterations=%d loss=%.6g grad_norm=%.3g" % (
        result.status, result.n_iter, result.loss, result.grad_norm))
    return STATUS_EXIT[result.status]


def _iters_to_tol(trace, tol):
    g = trace.grad_norms
    hits = np.flatnonzero(g < tol)
    return int(trace.column("iteration")[hits[0]]) if hits.size else None


def cmd_bench(args):
    datasets = []
    for path in args.input or []:
        datasets.append(("file", path))
    for spec in args.synthetic_spec or []:
        try:
            datasets.append(parse_dataset_spec(spec))
        except ValueError as e:
            _err(str(e))
            return EXIT_USAGE
    if not datasets:
        datasets = [parse_dataset_spec(s) for s in DEFAULT_BENCH_SPECS]
    try:
        os.makedirs(args.out_dir, exist_ok=True)
    except OSError as e:
        _err("cannot create %s: %s" % (args.out_dir, e))
        return EXIT_USAGE

    rows = []
    for idx, (kind, params) in enumerate(datasets):
        if kind == "file":
            label = "%d-%s" % (idx, os.path.splitext(os.path.basename(params))[0])
        else:
            label = "%d-%s-" % (idx, kind) + "-".join(
                "%s%s" % (k, v) for k, v in sorted(params.items()))
        for rep in range(args.repeats):
            seed = args.seed + rep
            row_base = {"dataset": label, "seed": seed}
            t0 = time.perf_counter()
            try:
                if kind == "file":
                    cset = io.load_matrix_set(params)
                else:
                    cset = build_dataset(kind, params, seed)
            except (OSError, ValueError) as e:
                for method in args.methods:
                    rows.append(dict(row_base, method=method, status="error",
                                     error=str(e)))
                continue
            io_time = time.perf_counter() - t0 if kind == "file" else 0.0
            for method in args.methods:
                row = dict(row_base, method=method, io_time_s=io_time)
                try:
                    result = _run(cset, method, args.max_iter, args.tol,
                                  args.max_halvings)
                except DomainError as e:
                    rows.append(dict(row, status="error", error=str(e)))
                    continue
                trace_name = "%s_%s_seed%d.csv" % (label, method, seed)
                meta = _metadata(
                    method, cset.n, cset.p, result.status,
                    seed=None if kind == "file" else seed,
                    sigma=params.get("sigma") if kind == "synth" else None,
                    source=params if kind == "file" else kind)
                t1 = time.perf_counter()
                io.write_trace(os.path.join(args.out_dir, trace_name),
                               result.trace, meta)
                row["io_time_s"] = io_time + time.perf_counter() - t1
                row.update(
                    status=result.status, iterations=result.n_iter,
                    iters_to_tol=_iters_to_tol(result.trace, args.tol),
                    init_time_s=result.trace.init_time,
                    solve_time_s=result.trace.records[-1].wall_time,
                    final_loss=result.loss, final_grad_norm=result.grad_norm,
                    trace_file=trace_name)
                rows.append(row)

    summary_path = os.path.join(args.out_dir, "summary.csv")
    with open(summary_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS, restval="")
        writer.writeheader()
        writer.writerows(rows)
    _print_summary(rows)
    return EXIT_OK


def _print_summary(rows):
    header = "%-36s %-3s %6s %-18s %6s %10s %12s %10s" % (
        "dataset", "m", "seed", "status", "iters", "time_s", "final_loss",
        "grad_norm")
    print(header)
    for r in rows:
        if r.get("status") == "error":
            print("%-36s %-3s %6d %-18s %s" % (r["dataset"], r["method"],
                                               r["seed"], "error", r["error"]))
            continue
        print("%-36s %-3s %6d %-18s %6d %10.4f %12.6g %10.3g" % (
            r["dataset"], r["method"], r["seed"], r["status"], r["iterations"],
            r["solve_time_s"], r["final_loss"], r["final_grad_norm"]))


def cmd_export_text(args):
    try:
        data = io.load_mset(args.input)
    except (OSError, ValueError) as e:
        _err("cannot read %s: %s" % (args.input, e))
        return EXIT_USAGE
    text = io.export_text(data)
    if args.out:
        try:
            with open(args.out, "w") as f:
                f.write(text)
        except OSError as e:
            _err("cannot write %s: %s" % (args.out, e))
            return EXIT_USAGE
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _add_solver_flags(p):
    p.add_argument("--max-iter", type=_pos_int, default=1000)
    p.add_argument("--tol", type=_pos_float, default=1e-10,
                   help="stop when the gradient Frobenius norm is below this")
    p.add_argument("--max-halvings", type=_pos_int, default=30)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jointdiag",
        description="Approximate joint diagonalization of positive matrices.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic matrix set")
    p.add_argument("--n", type=_pos_int, required=True)
    p.add_argument("--p", type=_pos_int, required=True)
    p.add_argument("--sigma", type=_nonneg_float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="jointly diagonalize an MSET file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--method", choices=sorted(METHOD_NAMES), default="qn")
    _add_solver_flags(p)
    p.add_argument("--trace-out")
    p.add_argument("--b-out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run methods on datasets, write traces")
    p.add_argument("--in", dest="input", action="append",
                   help="MSET file (repeatable)")
    p.add_argument("--synthetic-spec", action="append",
                   help="synth:n=..,p=..,sigma=.. or "
                        "segments:n=..,p=..,length=..,noise=.. (repeatable)")
    p.add_argument("--methods", type=_methods, default=["qn", "gd"])
    p.add_argument("--repeats", type=_pos_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench, tol=1e-8)

    p = sub.add_parser("export-text", help="dump an MSET file as text")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_text)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
