"""Command-line front end: single runs, scenario batches, catalog listing
and re-aggregation of existing results.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .harness import (ConfigError, ScenarioConfig, apply_overrides,
                      builtin_catalog, execute_run, read_runs_csv,
                      run_batch_records, scenario_from_text, scenario_to_text,
                      summarize, summarize_rows, write_reports,
                      write_timeseries)
from .market import MarketRunRecord

OUT_DIR_ENV = "INNOSIM_OUT_DIR"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="innosim",
        description="Deterministic bit-string market / society simulator",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_scenario_args(p):
        p.add_argument("--scenario", help="built-in scenario name (see `catalog`)")
        p.add_argument("--config", help="path to a flat key=value scenario config")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config field")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./out)")
        p.add_argument("--force", action="store_true",
                       help="allow writing into a non-empty directory")
        p.add_argument("--timeseries", action="store_true",
                       help="record full per-step matrices (large)")

    p_run = sub.add_parser("run", help="execute a single seeded run")
    add_scenario_args(p_run)

    p_batch = sub.add_parser("batch", help="execute a Monte Carlo batch")
    add_scenario_args(p_batch)
    p_batch.add_argument("--runs", type=int, help="override the run count")
    p_batch.add_argument("--jobs", type=int, default=1,
                         help="parallel worker processes (default 1)")

    sub.add_parser("catalog", help="list built-in scenarios")

    p_rep = sub.add_parser("report", help="re-aggregate an existing runs.csv")
    p_rep.add_argument("--runs-csv", required=True, help="path to runs.csv")
    p_rep.add_argument("--out-dir", help="where to write summary.json")
    p_rep.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p_rep.add_argument("--force", action="store_true")
    return parser


def _resolve_out_dir(arg: str | None) -> Path:
    if arg:
        return Path(arg)
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env) if env else Path("out")


def _load_scenario(args) -> ScenarioConfig:
    if bool(args.scenario) == bool(args.config):
        raise ConfigError("give exactly one of --scenario or --config")
    if args.scenario:
        cat = builtin_catalog()
        if args.scenario not in cat:
            raise ConfigError(f"unknown scenario: {args.scenario}")
        cfg = cat[args.scenario]
    else:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
        cfg = scenario_from_text(text)
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    if args.seed is not None:
        overrides["base_seed"] = str(args.seed)
    if getattr(args, "runs", None) is not None:
        overrides["runs"] = str(args.runs)
    cfg = apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_scenario(args)
    out = _resolve_out_dir(args.out_dir)
    rec = execute_run(cfg, 0, record_timeseries=args.timeseries)
    summary = summarize(cfg, [rec])
    write_reports(out, cfg, [rec], summary, force=args.force)
    record_json = out / "record.json"
    with open(record_json, "w", encoding="utf-8") as f:
        body = rec.to_json_dict()
        body["scenario"] = cfg.name
        body["config_text"] = scenario_to_text(cfg)
        json.dump(body, f, indent=2, sort_keys=True)
        f.write("\n")
    if args.timeseries:
        write_timeseries(out, [rec])
    print(f"wrote run outputs to {out}")
    return 0


def _cmd_batch(args) -> int:
    cfg = _load_scenario(args)
    out = _resolve_out_dir(args.out_dir)
    records = run_batch_records(cfg, jobs=args.jobs,
                                record_timeseries=args.timeseries)
    summary = summarize(cfg, records)
    write_reports(out, cfg, records, summary, force=args.force)
    if args.timeseries:
        write_timeseries(out, records)
    degenerate = sum(1 for r in records
                     if isinstance(r, MarketRunRecord) and r.flags)
    print(f"wrote {len(records)} runs to {out} ({degenerate} flagged)")
    return 0


def _cmd_catalog() -> int:
    for name, cfg in builtin_catalog().items():
        print(f"{name:20s} {cfg.description}")
    return 0


def _cmd_report(args) -> int:
    rows = read_runs_csv(args.runs_csv)
    summary = summarize_rows(rows, boot_seed=args.seed)
    out = _resolve_out_dir(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "summary.json"
    if target.exists() and not args.force:
        raise FileExistsError(f"{target} exists (use --force)")
    with open(target, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {target}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        if args.subcommand == "run":
            return _cmd_run(args)
        if args.subcommand == "batch":
            return _cmd_batch(args)
        if args.subcommand == "catalog":
            return _cmd_catalog()
        if args.subcommand == "report":
            return _cmd_report(args)
        raise ConfigError(f"unknown subcommand {args.subcommand}")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FileExistsError, OSError, RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
