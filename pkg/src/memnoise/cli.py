"""Command line entry point: ``memnoise run|list|validate``.

Exit codes: 0 ok, 2 config error, 3 numeric rejection, 4 IO error.
The worker count comes from MEMNOISE_WORKERS (default 1).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from .config import ConfigError, load_config
from .experiments import REGISTRY, NumericRejection, collect, run_point
from .core import ScheduleError
from .oracle import OracleError
from .reservoir import ReservoirError
from .tables import write_csv, write_dat

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
NUMERIC_ERRORS = (NumericRejection, OracleError, ReservoirError, ScheduleError,
                  ArithmeticError, np.linalg.LinAlgError)


def _code_version() -> str:
    try:
        return version("memnoise")
    except PackageNotFoundError:
        return "unknown"


def _workers() -> int:
    raw = os.environ.get("MEMNOISE_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MEMNOISE_WORKERS must be an integer, got '{raw}'")
    return max(1, n)


def _evaluate(cfg, workers: int) -> list[dict]:
    values = cfg.values
    if workers == 1 or len(values) == 1:
        return [run_point(cfg, v) for v in values]
    with ProcessPoolExecutor(max_workers=min(workers, len(values))) as pool:
        # map keeps config order regardless of completion order
        return list(pool.map(run_point, [cfg] * len(values), values))


def _report(cfg, header, rows, out) -> list[str]:
    exp = REGISTRY[cfg.experiment]
    x = [r[0] for r in rows]
    files = []
    numeric = [k for k in exp.plot_y if k in header]
    cols = [header.index(k) for k in numeric]
    write_dat(out / f"{cfg.experiment}.dat", [header[0]] + numeric,
              [[r[0]] + [r[c] for c in cols] for r in rows])
    files.append(f"{cfg.experiment}.dat")
    if numeric:
        from . import plotting

        series = {k: [abs(r[c]) if exp.log_axes[1] else r[c] for r in rows]
                  for k, c in zip(numeric, cols)}
        plotting.plot_sweep(out / f"{cfg.experiment}.png", x, series, header[0],
                            cfg.experiment, exp.log_axes)
        files.append(f"{cfg.experiment}.png")
    return files


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    start = time.time()
    rows = _evaluate(cfg, _workers())
    header, table = collect(cfg, rows)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{cfg.experiment}.csv", header, table)
    files = [f"{cfg.experiment}.csv"]
    if not args.no_plots:
        files += _report(cfg, header, table, out)
    summary = {}
    for key in ("fitted_exponent", "tail_slope", "ratio"):
        if key in header:
            vals = [r[header.index(key)] for r in table]
            summary[key] = [v if not (isinstance(v, float) and math.isnan(v)) else None
                            for v in vals]
    manifest = {"experiment": cfg.experiment, "config": cfg.raw, "seed": cfg.seed,
                "code_version": _code_version(), "wall_time_s": time.time() - start,
                "files": files, "summary": summary}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    print(f"{cfg.experiment}: {len(table)} rows -> {out}")
    return EXIT_OK


def cmd_list(args) -> int:
    if args.format == "csv":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["name"])
        for name in REGISTRY:
            w.writerow([name])
    else:
        width = max(len(n) for n in REGISTRY)
        for name, exp in REGISTRY.items():
            print(f"{name:<{width}}  {exp.description}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok: {cfg.experiment}, {len(cfg.values)} sweep points over '{cfg.parameter}'")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="memnoise",
                                 description="Reservoir-memory error maps for quantum gates.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--no-plots", action="store_true", help="skip .dat and .png output")
    r.set_defaults(func=cmd_run)
    ls = sub.add_parser("list", help="list the available experiments")
    ls.add_argument("--format", choices=("text", "csv"), default="text")
    ls.set_defaults(func=cmd_list)
    v = sub.add_parser("validate", help="parse a config without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numeric rejection: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
