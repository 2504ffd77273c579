"""Command line entry point.

    contactsys run <config> [--threads N] [--seed S] [--out DIR]
    contactsys list
    contactsys selftest

Exit codes: 0 every verdict passed, 1 some verdict failed (or the numerics
gave up), 2 configuration error. Without ``--out`` results go to
``$CONTACTSYS_OUT`` or ``./results``.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import ConfigError, ContactError

OUT_ENV = "CONTACTSYS_OUT"
log = logging.getLogger("contactsys")


def _fmt(v):
    # fixed repr keeps CSV output byte-identical between runs
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            vals = [r.get(c, "") for c in columns] if isinstance(r, dict) else list(r)
            w.writerow([_fmt(v) for v in vals])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def write_report(report, out_dir, stem):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{stem}.csv", report.columns, report.rows)
    for name, (cols, rows) in sorted(report.tables.items()):
        write_csv(out / f"{stem}_{name}.csv", cols, rows)
    with open(out / f"{stem}.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(report.to_json()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out / f"{stem}.json"


def cmd_run(args):
    from . import experiments
    from .systole import set_threads

    try:
        cfg = load_config(args.config, experiments.CATALOG)
    except ConfigError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    set_threads(args.threads)
    out_dir = args.out or cfg.output.get("dir") or os.environ.get(OUT_ENV) or "results"
    stem = cfg.output.get("prefix") or Path(args.config).stem
    try:
        report = experiments.run(cfg)
    except ConfigError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return 2
    except ContactError as exc:
        print(f"{cfg.kind}: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    path = write_report(report, out_dir, stem)
    for v in report.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {v.name}: {v.value:.6g} ({v.rule} {v.tolerance:g})")
    print(f"{cfg.kind}: {'pass' if report.passed else 'fail'} in {report.wall_time:.1f}s -> {path}")
    return 0 if report.passed else 1


def cmd_list(args):
    from .experiments import list_catalog
    print(list_catalog())
    return 0


def cmd_selftest(args):
    from .selftest import run_selftest
    return 0 if run_selftest(verbose=True) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="contactsys", description="Systolic experiments on contact forms.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./results)")
    r.set_defaults(func=cmd_run)
    sub.add_parser("list", help="list experiment kinds").set_defaults(func=cmd_list)
    sub.add_parser("selftest", help="run the built-in checks").set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
