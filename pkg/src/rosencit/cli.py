"""Command-line entry point.

Exit codes
----------
0  success
1  other library error
2  usage error (bad flags, unknown columns, invalid options)
3  data error (unreadable or non-numeric CSV, degenerate columns, too few rows)
4  budget error (requested simulation exceeds the work ceiling)
5  output error (result could not be written)
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .causal import PC
from .citest import TestSpec, run_test, transform_columns
from .exceptions import DataError, RosenCITError, UsageError
from .kernels import BandwidthPolicy, KernelSpec
from .nulldist import (
    CACHE_ENV,
    DEFAULT_REPS,
    NullKey,
    cache_get_or_build,
    critical_value,
    get_default_cache,
)
from .simbench import MODEL_IDS, bandwidth_sweep, dag_study, size_power_run
from .transforms import Dataset

logger = logging.getLogger("rosencit")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_OUTPUT = 5


class OutputError(RosenCITError):
    exit_code = EXIT_OUTPUT


def ingest_csv(path, discrete_cols: Sequence[str] = ()) -> Dataset:
    """Read a headed numeric CSV into a :class:`Dataset`.

    Row numbers in error messages are file line numbers (the header is line 1).
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if any(not h for h in header):
        raise DataError(f"{path}: blank column name in header")
    dups = sorted({h for h in header if header.count(h) > 1})
    if dups:
        raise DataError(f"{path}: duplicate column names {dups}")
    unknown = [c for c in discrete_cols if c not in header]
    if unknown:
        raise UsageError(f"--discrete names unknown columns {unknown}")
    if len(rows) == 1:
        raise DataError(f"{path} has a header but no data rows")
    values = np.empty((len(rows) - 1, len(header)))
    bad = []
    for r, row in enumerate(rows[1:]):
        line = r + 2
        if len(row) != len(header):
            bad.append(f"line {line}: expected {len(header)} cells, found {len(row)}")
            continue
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError:
                bad.append(f"line {line}, column {header[c]!r}: "
                           f"{'missing' if not cell.strip() else 'non-numeric'} cell {cell!r}")
                continue
            if not np.isfinite(values[r, c]):
                bad.append(f"line {line}, column {header[c]!r}: non-finite cell {cell!r}")
    if bad:
        shown = "; ".join(bad[:10]) + (f"; ... ({len(bad)} problems)" if len(bad) > 10 else "")
        raise DataError(f"{path}: {shown}")
    logger.info("read %s: %d rows, %d columns", path, values.shape[0], values.shape[1])
    return Dataset.from_array(values, header, discrete=tuple(discrete_cols))


def _text_lines(doc, prefix="") -> list:
    lines = []
    for key, val in doc.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            lines += _text_lines(val, name + ".")
        else:
            lines.append((name, json.dumps(val) if isinstance(val, (list, tuple)) else val))
    return lines


def render(doc: dict, fmt: str, text: Optional[str] = None) -> str:
    """JSON (sorted keys) or aligned ``key  value`` text."""
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if text is not None:
        return text
    lines = _text_lines(doc)
    width = max((len(k) for k, _ in lines), default=0)
    return "".join(f"{k:<{width}}  {v}\n" for k, v in lines)


def emit_result(result, fmt: str = "json", output=None) -> str:
    """Render a result object and write it to ``output`` (stdout when None).

    ``result`` may be a TestResult, BenchReport, Cpdag or a plain dict.
    """
    if fmt not in ("json", "text"):
        raise UsageError(f"unknown format {fmt!r}; use json or text")
    text = None
    if hasattr(result, "to_adjacency_text"):
        doc = result.to_dict()
        doc["adjacency"] = result.to_adjacency_text().splitlines()
        text = result.to_adjacency_text()
    elif hasattr(result, "to_text"):
        doc = result.to_dict()
        text = result.to_text()
    elif hasattr(result, "to_dict"):
        doc = result.to_dict()
    else:
        doc = dict(result)
    body = render(doc, fmt, text)
    _write(body, output)
    return body


def _write(body: str, output) -> None:
    if output is None or str(output) == "-":
        sys.stdout.write(body)
        return
    try:
        Path(output).write_text(body)
    except OSError as exc:
        raise OutputError(f"cannot write {output}: {exc}") from exc


def _names(arg: Optional[str]) -> tuple:
    if not arg:
        return ()
    return tuple(s.strip() for s in arg.split(",") if s.strip())


def _floats(arg: str, flag: str) -> list:
    try:
        return [float(s) for s in arg.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"{flag} expects comma-separated numbers, got {arg!r}") from exc


def _resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    seed = int(np.random.SeedSequence().entropy % (2 ** 31))
    print(f"no --seed given; using generated seed {seed}", file=sys.stderr)
    return seed


def _check_columns(data: Dataset, cols) -> None:
    missing = [c for c in cols if c not in data.names]
    if missing:
        raise UsageError(f"unknown columns {missing}; available: {list(data.names)}")


def _policy(args) -> BandwidthPolicy:
    return BandwidthPolicy(args.bandwidth_scale, args.bandwidth, args.cond_scale)


def cmd_test(args) -> int:
    seed = _resolve_seed(args.seed)
    data = ingest_csv(args.csv, _names(args.discrete))
    x, y, z = _names(args.x), _names(args.y), _names(args.z)
    _check_columns(data, x + y + z)
    spec = TestSpec(x, y, z, args.alpha, KernelSpec(args.kernel), _policy(args), args.reps,
                    seed, args.null_seed, min_n=args.min_n)
    result = run_test(data, spec, n_jobs=args.threads)
    emit_result(result, args.format, args.output)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    seed = args.seed
    try:
        dims = tuple(int(d) for d in args.dims.split(","))
    except ValueError as exc:
        raise UsageError(f"--dims expects p,q,r integers, got {args.dims!r}") from exc
    if len(dims) != 3:
        raise UsageError("--dims expects exactly three integers p,q,r")
    kind = args.kind
    if kind is None:
        kind = ("rho_unconditional" if dims[2] == 0
                else "rho_normalized" if dims == (1, 1, 1) else "rho_multi_unnormalized")
    key = NullKey(args.n, dims, args.reps, seed, kind)
    table = cache_get_or_build(get_default_cache(), key, n_jobs=args.threads)
    doc = {"n": key.n, "dims": list(key.dims), "B": key.B, "seed": key.seed, "kind": key.kind,
           "cache_file": key.filename,
           "critical_values": {f"{a:g}": critical_value(table, a) for a in (0.01, 0.05, 0.10)}}
    emit_result(doc, args.format, args.output)
    return EXIT_OK


def cmd_pc(args) -> int:
    seed = _resolve_seed(args.seed)
    data = ingest_csv(args.csv, _names(args.discrete))
    cols = _names(args.columns)
    if cols:
        _check_columns(data, cols)
        data = data.subset(cols)
    est = PC(args.alpha, args.max_depth, args.test, args.kernel, args.bandwidth_scale,
             args.bandwidth, args.cond_scale, args.reps, seed, args.null_seed).fit(data)
    cpdag = est.cpdag_
    if args.format == "json":
        doc = cpdag.to_dict()
        doc["adjacency"] = cpdag.to_adjacency_text().splitlines()
        doc["config"] = {"alpha": args.alpha, "max_depth": args.max_depth, "test": args.test,
                         "kernel": args.kernel, "bandwidth_scale": args.bandwidth_scale,
                         "bandwidth": args.bandwidth, "cond_scale": args.cond_scale, "reps": args.reps, "seed": seed,
                         "null_seed": args.null_seed, "n": data.n, "n_tests": est.n_tests_}
        _write(render(doc, "json"), args.output)
    else:
        header = (f"# pc alpha={args.alpha} test={args.test} seed={seed} "
                  f"null_seed={args.null_seed} n={data.n}\n")
        _write(header + cpdag.to_adjacency_text(), args.output)
    if args.dot:
        _write(cpdag.to_dot(), args.dot)
    return EXIT_OK


def cmd_bench(args) -> int:
    seed = _resolve_seed(args.seed)
    t0 = time.perf_counter()
    if args.dag_study:
        doc = dag_study(args.nodes, args.edge_prob, args.n, args.reps, args.noise, args.alpha,
                        args.test, seed, check_order=args.check_order)
        if args.timing:
            doc["wall_seconds"] = round(time.perf_counter() - t0, 3)
        emit_result(doc, args.format, args.output)
        return EXIT_OK
    models = _names(args.models)
    unknown = [m for m in models if m not in MODEL_IDS]
    if unknown or not models:
        raise UsageError(f"--models must name models from M1..M18, got {args.models!r}")
    alphas = _floats(args.alphas, "--alphas")
    common = dict(kernel=KernelSpec(args.kernel), cond_scale=args.cond_scale,
                  reps_B=args.null_reps,
                  null_seed=args.null_seed, n_jobs=args.threads)
    if args.sweep_c:
        report = bandwidth_sweep(models, args.n, _floats(args.sweep_c, "--sweep-c"),
                                 args.reps, seed, alphas=alphas, **common)
    else:
        report = size_power_run(models, args.n, alphas, args.reps, seed,
                                scale_c=args.bandwidth_scale, **common)
    logger.info("bench finished in %.1f s", report.wall_seconds)
    if args.format == "json":
        _write(render(report.to_dict(timing=args.timing), "json"), args.output)
    else:
        _write(report.to_text(), args.output)
    return EXIT_OK


def cmd_transform(args) -> int:
    seed = _resolve_seed(args.seed)
    data = ingest_csv(args.csv, _names(args.discrete))
    x, y, z = _names(args.x), _names(args.y), _names(args.z)
    if not x:
        raise UsageError("--x needs at least one column")
    _check_columns(data, x + y + z)
    if len(set(x + y + z)) != len(x + y + z):
        raise UsageError("x, y and z column selections must be disjoint")
    u, v, w, _, _ = transform_columns(data, x, y, z, KernelSpec(args.kernel), _policy(args),
                                      seed)
    header = [f"U_{c}" for c in x] + [f"V_{c}" for c in y] + [f"W_{c}" for c in z]
    body = np.hstack([b for b in (u, v, w) if b is not None])
    lines = [",".join(header)] + [",".join(repr(float(t)) for t in row) for row in body]
    _write("\n".join(lines) + "\n", args.output)
    print(f"transformed {data.n} rows; seed={seed}", file=sys.stderr)
    return EXIT_OK


def _add_smoothing(p) -> None:
    p.add_argument("--kernel", choices=("gaussian", "epanechnikov"), default="gaussian",
                   help="smoothing kernel (default gaussian)")
    p.add_argument("--bandwidth-scale", type=float, default=1.0, metavar="C",
                   help="multiplier c on the rule-of-thumb bandwidth (default 1)")
    p.add_argument("--bandwidth", type=float, default=None, metavar="H",
                   help="fixed bandwidth h for every conditioning column")
    p.add_argument("--cond-scale", choices=("rank", "raw"), default="rank",
                   help="smooth conditioning columns on their ranks (default) or raw values")
    p.add_argument("--discrete", default="", metavar="COLS",
                   help="comma-separated integer-coded discrete columns")


def _add_output(p) -> None:
    p.add_argument("--format", choices=("json", "text"), default="json",
                   help="output document format (default json)")
    p.add_argument("--output", "-o", default=None, metavar="PATH",
                   help="write the document here instead of standard output")


def _add_common(p) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="seed for randomized components; generated and echoed when omitted")
    p.add_argument("--threads", type=int, default=1, metavar="K",
                   help="maximum worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rosencit",
        description="Distribution-free conditional independence tests on "
                    "Rosenblatt-transformed data.",
        epilog=f"Null tables are cached in ${CACHE_ENV} (default ~/.cache/rosencit). "
               "Exit codes: 0 ok, 2 usage, 3 data, 4 budget, 5 output.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="test X independent of Y given Z on a CSV file")
    p.add_argument("csv", help="input CSV with a header row")
    p.add_argument("--x", required=True, help="comma-separated x columns")
    p.add_argument("--y", required=True, help="comma-separated y columns")
    p.add_argument("--z", default="", help="comma-separated conditioning columns")
    p.add_argument("--alpha", type=float, default=0.05, help="test level (default 0.05)")
    p.add_argument("--reps", type=int, default=DEFAULT_REPS,
                   help="null table size B (default 1000)")
    p.add_argument("--null-seed", type=int, default=0, help="seed keying the null table")
    p.add_argument("--min-n", type=int, default=20, help="minimum sample size (default 20)")
    _add_smoothing(p)
    _add_common(p)
    _add_output(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("calibrate", help="simulate and cache a null table")
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--dims", default="1,1,1", help="block widths p,q,r (default 1,1,1)")
    p.add_argument("--reps", type=int, default=DEFAULT_REPS, help="table size B")
    p.add_argument("--kind", default=None,
                   choices=("rho_normalized", "rho_multi_unnormalized", "rho_unconditional"),
                   help="statistic kind (inferred from --dims by default)")
    p.add_argument("--seed", type=int, default=0,
                   help="null table seed; matches the --null-seed of test (default 0)")
    p.add_argument("--threads", type=int, default=1, metavar="K",
                   help="maximum worker processes (default 1)")
    _add_output(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("pc", help="PC causal discovery on a CSV file")
    p.add_argument("csv", help="input CSV with a header row")
    p.add_argument("--columns", default="", help="restrict to these comma-separated columns")
    p.add_argument("--alpha", type=float, default=0.05, help="test level (default 0.05)")
    p.add_argument("--max-depth", type=int, default=None,
                   help="largest conditioning set size (default unlimited)")
    p.add_argument("--test", choices=("rho", "pcor"), default="rho",
                   help="CI test: rho, or pcor (partial-correlation baseline)")
    p.add_argument("--reps", type=int, default=DEFAULT_REPS, help="null table size B")
    p.add_argument("--null-seed", type=int, default=0, help="seed keying the null tables")
    p.add_argument("--dot", default=None, metavar="PATH", help="also write the graph as DOT")
    _add_smoothing(p)
    _add_common(p)
    _add_output(p)
    p.set_defaults(func=cmd_pc)

    p = sub.add_parser("bench", help="simulation size/power tables and the DAG study")
    p.add_argument("--models", default="M1,M2,M3",
                   help="comma-separated model ids M1..M18 (default M1,M2,M3)")
    p.add_argument("--n", type=int, default=100, help="sample size (default 100)")
    p.add_argument("--reps", type=int, default=500, help="replications (default 500)")
    p.add_argument("--alphas", default="0.05,0.1", help="comma-separated levels")
    p.add_argument("--sweep-c", default="", metavar="C1,C2,...",
                   help="bandwidth multipliers for a sensitivity sweep")
    p.add_argument("--null-reps", type=int, default=DEFAULT_REPS, help="null table size B")
    p.add_argument("--null-seed", type=int, default=0, help="seed keying the null tables")
    p.add_argument("--dag-study", action="store_true",
                   help="run the random-DAG recovery study instead of model tables")
    p.add_argument("--nodes", type=int, default=5, help="DAG study: number of nodes")
    p.add_argument("--edge-prob", type=float, default=0.4, help="DAG study: edge probability")
    p.add_argument("--noise", choices=("normal", "uniform"), default="normal",
                   help="DAG study: noise law")
    p.add_argument("--alpha", type=float, default=0.05, help="DAG study: PC level")
    p.add_argument("--test", choices=("rho", "pcor"), default="rho", help="DAG study: CI test")
    p.add_argument("--check-order", action="store_true",
                   help="DAG study: rerun each replicate on permuted columns")
    p.add_argument("--timing", action="store_true", help="include wall-clock time in output")
    p.add_argument("--kernel", choices=("gaussian", "epanechnikov"), default="gaussian",
                   help="smoothing kernel (default gaussian)")
    p.add_argument("--bandwidth-scale", type=float, default=1.0, metavar="C",
                   help="bandwidth multiplier when not sweeping (default 1)")
    p.add_argument("--cond-scale", choices=("rank", "raw"), default="rank",
                   help="smooth conditioning columns on their ranks (default) or raw values")
    _add_common(p)
    _add_output(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("transform", help="write Rosenblatt-transformed U/V/W columns as CSV")
    p.add_argument("csv", help="input CSV with a header row")
    p.add_argument("--x", required=True, help="comma-separated x columns")
    p.add_argument("--y", default="", help="comma-separated y columns")
    p.add_argument("--z", default="", help="comma-separated conditioning columns")
    _add_smoothing(p)
    _add_common(p)
    p.add_argument("--output", "-o", default=None, metavar="PATH",
                   help="output CSV (default standard output)")
    p.set_defaults(func=cmd_transform)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except RosenCITError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
