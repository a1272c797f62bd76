"""Command-line entry point.

    arrivaltime free|barrier|compare|uncertainty [--config PATH] [--out DIR]
                [--format csv|json] [--seed N]
    arrivaltime validate [--config PATH] [--describe]

Exit codes: 0 all verdicts pass, 1 a tolerance verdict failed, 2 the
configuration is invalid, 3 a numerical precondition or check failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import config as config_mod
from .errors import ArrivalError, ConfigInvalid
from .pipelines import RUNNERS, Table

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _fmt(v):
    """Shortest text that round-trips: repr for floats, true/false for booleans."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return v.item()
    return v


def render_csv(table: Table):
    buf = io.StringIO()
    for key, val in table.header.items():
        buf.write(f"# {key}: {_fmt(val)}\n")
    if table.columns:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def render_json(table: Table):
    doc = {
        "name": table.name,
        "header": {k: _jsonable(v) for k, v in table.header.items()},
        "columns": list(table.columns),
        "rows": [[_jsonable(x) for x in row] for row in table.rows],
    }
    return json.dumps(doc, indent=1) + "\n"


def write_atomic(path, text):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bundle(bundle, out, fmt):
    os.makedirs(out, exist_ok=True)
    render = render_csv if fmt == "csv" else render_json
    verdicts = Table("verdicts", {"passed": bundle.passed}, ("name", "passed", "detail"),
                     [(v.name, v.passed, v.detail) for v in bundle.verdicts])
    provenance = Table("provenance", bundle.provenance)
    paths = []
    for table in [*bundle.tables, verdicts, provenance]:
        path = os.path.join(out, f"{table.name}.{fmt}")
        write_atomic(path, render(table))
        paths.append(path)
    return paths


def build_parser():
    ap = argparse.ArgumentParser(prog="arrivaltime",
                                 description="Arrival-time distributions for 1D wave packets")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("free", "free-particle arrival distributions"),
                       ("barrier", "arrival behind a potential barrier"),
                       ("compare", "analytic means against the split-operator flux"),
                       ("uncertainty", "time-energy products over a random ensemble")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="flat key = value config file (defaults if omitted)")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--format", choices=["csv", "json"], help="overrides output.format")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized ensembles")
    p = sub.add_parser("validate", help="check a config without computing")
    p.add_argument("--config")
    p.add_argument("--describe", action="store_true", help="list every key with its default")
    return ap


def _load(path):
    return config_mod.load(path) if path else config_mod.parse_text("")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            if args.describe:
                print(config_mod.describe())
                return EXIT_OK
            cfg = _load(args.config)
            print("\n".join(cfg.echo()) or "# all defaults")
            print("config ok")
            return EXIT_OK
        cfg = _load(args.config)
        fmt = args.format or cfg["output.format"]
        run = RUNNERS[args.command]
        bundle = run(cfg, args.seed) if args.command == "uncertainty" else run(cfg)
        paths = write_bundle(bundle, args.out, fmt)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArrivalError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for v in bundle.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {v.name}: {v.detail}")
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK if bundle.passed else EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
