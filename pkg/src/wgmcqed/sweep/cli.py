"""Command line entry point.

    wgmcqed solve --D 20 --d 1 --pol TM
    wgmcqed sweep --config sweep.toml --out results/ --jobs 2
    wgmcqed reproduce-figure 9 --out fig9/
    wgmcqed cache inspect | clear

Figure numbers follow the usual sequence for these studies: 3 equatorial field
profiles, 4 V_m, 5 Q_rad, 6 Q_total, 7 g, 8 n0, 9 N0 (each against d), and
``table1`` for the comparison table.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .cache import ModeCache, default_cache_dir
from .config import ConfigError, build, default_config, load_config
from .report import FIGURE_SERIES, PROFILE_FIGURE, emit_report, record_json
from .runner import SweepFailedError, run_sweep

log = logging.getLogger("wgmcqed")

# documented default abscissa: principal diameters and minor diameters (um)
DEFAULT_D = [16.0, 18.0, 20.0]
DEFAULT_d = ["sphere", 12.0, 6.0, 4.0, 3.0, 2.0, 1.5, 1.25, 1.0, 0.85, 0.75, 0.65]

FIGURE_GRIDS = {
    "3": {"D": [20.0], "d": ["sphere", 12.0, 6.0, 3.0, 1.5, 0.75], "polarizations": ["TM"]},
    "table1": {"D": [16.0, 20.0], "d": ["sphere", 1.0, 0.75], "polarizations": ["TM"]},
}
for _n in FIGURE_SERIES:
    FIGURE_GRIDS[str(_n)] = {"D": DEFAULT_D, "d": DEFAULT_d, "polarizations": ["TE", "TM"]}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration entry, e.g. solver.n_eigs=10 (repeatable)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--no-cache", action="store_true", help="do not read or write the mode cache")
    p.add_argument("--format", choices=("csv", "json", "both"), help="report format")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wgmcqed", description="WGM resonator cavity-QED figures of merit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single geometry point")
    p.add_argument("--D", type=float, required=True, help="principal diameter, um")
    p.add_argument("--d", type=float, help="minor diameter, um (default: sphere)")
    p.add_argument("--pol", choices=("TE", "TM"), default="TM")
    _common(p)

    p = sub.add_parser("sweep", help="grid sweep from a configuration")
    _common(p)

    p = sub.add_parser("reproduce-figure", help="plot data for one figure or the comparison table")
    p.add_argument("figure", choices=sorted(FIGURE_GRIDS), help="3-9 or table1")
    _common(p)

    p = sub.add_parser("cache", help="inspect or clear the mode cache")
    p.add_argument("action", choices=("inspect", "clear"))
    p.add_argument("--cache-dir", help="cache directory (default: $WGMCQED_CACHE_DIR or ~/.cache/wgmcqed)")
    return ap


def _resolve(args, grid: dict | None = None) -> dict:
    base = default_config()
    if grid is not None:
        base["geometry"].update(grid)
    cfg = load_config(args.config, args.override, base=base)
    if args.out:
        cfg["output"]["dir"] = args.out
    if args.format:
        cfg["output"]["format"] = args.format
    if args.no_cache:
        cfg["cache"]["enabled"] = False
    return cfg


def _run(args, raw: dict, figures=(), table=False) -> int:
    cfg = build(raw)
    try:
        records, n_solves = run_sweep(cfg, jobs=args.jobs)
        status = 0
    except SweepFailedError as exc:
        records, n_solves = exc.records, None
        print(str(exc), file=sys.stderr)
        status = 1
    paths = emit_report(records, cfg.output_dir, cfg.output_format, figures=figures, table=table, config=raw)
    failed = sum(not r.ok for r in records)
    print(f"{len(records)} records ({failed} failed), "
          f"{'?' if n_solves is None else n_solves} eigensolves, {len(paths)} files in {cfg.output_dir}",
          file=sys.stderr)
    return status


def cmd_solve(args) -> int:
    d = args.D if args.d is None else args.d
    raw = _resolve(args, {"D": [args.D], "d": [d], "polarizations": [args.pol]})
    cfg = build(raw)
    records, _ = run_sweep(cfg, raise_if_all_failed=False)
    rec = records[0]
    print(json.dumps(record_json(rec), sort_keys=True, indent=1))
    if args.out:
        emit_report(records, cfg.output_dir, cfg.output_format, config=raw)
    return 0 if rec.ok else 1


def cmd_sweep(args) -> int:
    raw = _resolve(args)
    return _run(args, raw, figures=(PROFILE_FIGURE, *FIGURE_SERIES), table=True)


def cmd_reproduce(args) -> int:
    raw = _resolve(args, FIGURE_GRIDS[args.figure])
    if args.figure == "table1":
        return _run(args, raw, table=True)
    return _run(args, raw, figures=(int(args.figure),))


def cmd_cache(args) -> int:
    cache = ModeCache(args.cache_dir or default_cache_dir())
    if args.action == "clear":
        n = cache.clear()
        print(f"removed {n} entries from {cache.root}")
        return 0
    entries = cache.entries()
    print(f"{len(entries)} entries in {cache.root}")
    for key, rec in entries:
        if rec.get("corrupt"):
            print(f"{key[:16]}  CORRUPT")
            continue
        k = rec.get("key", {})
        g = k.get("geometry", {})
        print(f"{key[:16]}  D={g.get('D_um')} d={g.get('d_um')} m={k.get('m')} {k.get('polarization')} "
              f"k={rec.get('eigen_k')}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "reproduce-figure":
            return cmd_reproduce(args)
        return cmd_cache(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
