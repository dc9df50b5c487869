"""Command-line front end: ``rabi-hill {spectrum,exceptional,curves,oracle}``.

Every subcommand writes one table as CSV (default) or JSON, to --output or
stdout.  Exit codes: 0 success, 1 bad arguments, 2 a result did not
converge, 3 the output could not be written.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from .atlas import (
    FieldKind,
    GridRegion,
    classify_branches,
    default_region,
    extract_zero_set,
    sample_field,
)
from .errors import NotConvergedError, NullSpaceNotFoundError, ResidualTooLargeError
from .oracle import DEFAULT_N, convergence_study, oracle_spectrum, validate_records
from .recurrence import ModelParams, SolverOptions
from .spectrum import (
    NOT_CONVERGED,
    TOL_JUDD,
    TOL_TAIL,
    CaseLabel,
    classify_exceptional,
    exceptional_eigenvectors,
    scan_regular,
)

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3
THREADS_ENV = "RABI_HILL_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".15g")
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else float(format(v, ".15g"))
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def render(columns, rows, fmt_name, extra=None):
    if fmt_name == "json":
        doc = [{c: _json_value(r.get(c)) for c in columns} for r in rows]
        if extra:
            doc = {"records": doc, **{k: _json_value(v) for k, v in extra.items()}}
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def write_output(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".rabi-hill-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def threads_from_env():
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return min(os.cpu_count() or 1, 8)
    try:
        k = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return k


def _opts(args):
    return SolverOptions(tol=args.tol, m_max=args.mmax)


# --------------------------------------------------------------------------
# subcommands


def cmd_spectrum(args):
    if not args.xmin < args.xmax:
        raise UsageError("--xmin must be smaller than --xmax")
    if not args.step > 0:
        raise UsageError("--step must be positive")
    params = ModelParams(args.g, args.delta)
    records = scan_regular(params, args.xmin, args.xmax, args.step, _opts(args))
    if args.validate:
        records = validate_records(records, params, args.ntrunc)
    rows = [
        {
            "g": params.g,
            "delta": params.delta,
            "x": r.x,
            "energy": r.energy,
            "residual": r.residual,
            "oracle_gap": r.oracle_gap,
            "flags": "|".join(sorted(r.flags)),
        }
        for r in records
    ]
    cols = ["g", "delta", "x", "energy", "residual", "oracle_gap", "flags"]
    status = EXIT_NOT_CONVERGED if any(NOT_CONVERGED in r.flags for r in records) else EXIT_OK
    return render(cols, rows, args.format), status


def cmd_exceptional(args):
    if args.n < 0:
        raise UsageError("--n must be nonnegative")
    params = ModelParams(args.g, args.delta)
    rep = classify_exceptional(args.n, params, args.tol_judd, args.tol_tail, _opts(args))
    base = {
        "n": rep.n,
        "judd_value": rep.judd_value,
        "tail_value": rep.tail_value,
        "case_label": str(rep.case_label),
        "degenerate": rep.degenerate,
    }
    cols = list(base)
    status = EXIT_OK if rep.converged else EXIT_NOT_CONVERGED
    if not args.vectors:
        return render(cols, [base], args.format), status

    vectors = {}
    if rep.case_label in (CaseLabel.JUDD, CaseLabel.TAIL):
        length = max(args.length, args.n + 2)
        vec = exceptional_eigenvectors(args.n, params, rep, length, _opts(args))
        for name in ("judd", "tail"):
            v = getattr(vec, name)
            if v is not None:
                vectors[name] = v
    if args.format == "json":
        doc = {c: _json_value(base[c]) for c in cols}
        doc["vectors"] = {k: _json_value(list(v)) for k, v in vectors.items()}
        return json.dumps(doc, indent=2) + "\n", status
    rows = [
        {**base, "vector": name, "index": i, "q": float(q)}
        for name, v in vectors.items()
        for i, q in enumerate(v)
    ] or [base]
    return render(cols + ["vector", "index", "q"], rows, args.format), status


def cmd_curves(args):
    if args.n < 0:
        raise UsageError("--n must be nonnegative")
    nx, ny = args.grid
    try:
        if args.region is None:
            region = default_region(args.n, nx, ny)
        else:
            region = GridRegion(*args.region, nx, ny)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    threads = threads_from_env()
    opts = _opts(args)
    kinds = [FieldKind.JUDD, FieldKind.TAIL] if args.field == "both" else [FieldKind(args.field)]
    judd_grid = sample_field(args.n, region, FieldKind.JUDD, opts, threads)

    rows, masked = [], 0
    for kind in kinds:
        grid = judd_grid if kind is FieldKind.JUDD else sample_field(args.n, region, kind, opts, threads)
        masked += int(grid.mask.sum())
        zs = extract_zero_set(grid)
        for c in classify_branches(zs, args.n, kind, judd_grid, args.tol_judd):
            for g, d in c.points:
                rows.append({
                    "n": args.n,
                    "field": str(kind),
                    "branch_id": c.branch_id,
                    "closed": c.closed,
                    "on_judd": c.on_judd,
                    "g": g,
                    "delta": d,
                })
    cols = ["n", "field", "branch_id", "closed", "on_judd", "g", "delta"]
    if masked:
        print(f"warning: {masked} grid nodes did not converge and were masked", file=sys.stderr)
    return render(cols, rows, args.format), EXIT_NOT_CONVERGED if masked else EXIT_OK


def cmd_oracle(args):
    if args.ntrunc < 4:
        raise UsageError("--ntrunc must be at least 4")
    params = ModelParams(args.g, args.delta)
    n_list = sorted({args.ntrunc // 4, args.ntrunc // 2, args.ntrunc})
    smallest = 2 * (n_list[0] + 1)
    k = args.levels if args.levels is not None else max(smallest // 3, 1)
    if not 1 <= k <= smallest:
        raise UsageError(f"--levels must lie in [1, {smallest}]")
    study = convergence_study(params, n_list, k)
    rows = []
    for i, n in enumerate(n_list):
        for lev in range(k):
            change = study.levels[i, lev] - study.levels[i - 1, lev] if i else None
            rows.append({"n_trunc": n, "level": lev, "eigenvalue": study.levels[i, lev], "change": change})
    cols = ["n_trunc", "level", "eigenvalue", "change"]
    extra = None
    if args.format == "json":
        spec = oracle_spectrum(params, args.ntrunc)
        extra = {
            "eigenvalues": list(study.levels[-1]),
            "monotone": study.monotone,
            "final_change": study.final_change,
            "sweeps": spec.sweeps,
        }
    return render(cols, rows, args.format, extra), EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="rabi-hill", description="Quantum Rabi model spectrum via the Hill determinant")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, solver=True):
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--output", "-o", help="output file (default: stdout)")
        if solver:
            sp.add_argument("--tol", type=float, default=1e-12, help="limit convergence tolerance")
            sp.add_argument("--mmax", type=int, default=2000, help="maximum recurrence depth")

    sp = sub.add_parser("spectrum", help="regular and exceptional roots in an x window")
    sp.add_argument("--g", type=float, required=True)
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--xmin", type=float, required=True)
    sp.add_argument("--xmax", type=float, required=True)
    sp.add_argument("--step", type=float, default=0.01)
    sp.add_argument("--validate", action="store_true", help="attach oracle gaps")
    sp.add_argument("--ntrunc", type=int, default=DEFAULT_N, help="oracle truncation for --validate")
    common(sp)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("exceptional", help="classify the level x = n")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--g", type=float, required=True)
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--vectors", action="store_true", help="also emit eigenvector coefficients")
    sp.add_argument("--length", type=int, default=20, help="number of coefficients per vector")
    sp.add_argument("--tol-judd", type=float, default=TOL_JUDD)
    sp.add_argument("--tol-tail", type=float, default=TOL_TAIL)
    common(sp)
    sp.set_defaults(func=cmd_exceptional)

    sp = sub.add_parser("curves", help="zero curves of the Judd and tail fields")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--region", type=float, nargs=4, metavar=("GMIN", "GMAX", "DMIN", "DMAX"))
    sp.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"), default=(400, 400))
    sp.add_argument("--field", choices=("judd", "tail", "both"), default="tail")
    sp.add_argument("--tol-judd", type=float, default=1e-6, help="on-Judd threshold relative to median |J_n|")
    common(sp)
    sp.set_defaults(func=cmd_curves)

    sp = sub.add_parser("oracle", help="truncated Fock-basis eigenvalues and convergence table")
    sp.add_argument("--g", type=float, required=True)
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--ntrunc", type=int, default=DEFAULT_N)
    sp.add_argument("--levels", type=int)
    common(sp, solver=False)
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text, status = args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (NotConvergedError, NullSpaceNotFoundError, ResidualTooLargeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except ValueError as exc:
        parser.error(str(exc))
    try:
        write_output(text, args.output)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return status


if __name__ == "__main__":
    sys.exit(main())
