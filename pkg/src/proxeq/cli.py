"""Command line: ``proxeq run | list | crosscheck``.

Exit codes: 0 all certifications pass, 1 a certification failed, 2 the config
is invalid, 3 a numerical failure stopped the run. Log level comes from
PROXEQ_LOG (error, info or debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, config, runner


def _setup_logging() -> None:
    level = os.environ.get("PROXEQ_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _schema_error(target: str, exc: config.ConfigError) -> int:
    print(json.dumps({"error": "schema", "config": target, "message": str(exc), "diagnostics": exc.diagnostics}, indent=2), file=sys.stderr)
    return runner.EXIT_SCHEMA


def _run_one(target: str, out: str, seed: int | None, only_kinds=None, perturb=None) -> int:
    try:
        cfg = config.load(target)
    except config.ConfigError as exc:
        return _schema_error(target, exc)
    if seed is not None:
        cfg = config.override_seeds(cfg, seed)
    code = runner.run_config(cfg, Path(out), only_kinds, perturb)
    print(f"{cfg['name']}: exit {code} -> {Path(out) / cfg['name']}")
    return code


def _combine(codes: list[int]) -> int:
    return max(codes, default=runner.EXIT_OK)


def cmd_run(args) -> int:
    if args.jobs > 1 and len(args.configs) > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            codes = list(ex.map(_run_one, args.configs, [args.out] * len(args.configs), [args.seed_override] * len(args.configs)))
    else:
        codes = [_run_one(c, args.out, args.seed_override) for c in args.configs]
    return _combine(codes)


def list_experiments() -> str:
    lines = []
    for name in config.bundled_names():
        cfg = json.loads(config.resolve(name).read_text())
        lines.append(f"{name:<26} {cfg['description']}")
    return "\n".join(lines)


def cmd_list(args) -> int:
    print(list_experiments())
    return runner.EXIT_OK


def cmd_crosscheck(args) -> int:
    return _run_one(args.config, args.out, args.seed_override, {"crosscheck"}, args.debug_perturb)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxeq", description="Analytic GAN equilibrium experiments.")
    p.add_argument("--version", action="version", version=f"proxeq {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one or more configs (file paths or bundled names)")
    r.add_argument("configs", nargs="+")
    r.add_argument("--out", default="runs")
    r.add_argument("--seed-override", type=int, default=None)
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    ls = sub.add_parser("list", help="list bundled configs")
    ls.set_defaults(func=cmd_list)

    c = sub.add_parser("crosscheck", help="run the oracle agreement matrix of a config")
    c.add_argument("config", nargs="?", default="crosscheck_default")
    c.add_argument("--out", default="runs")
    c.add_argument("--seed-override", type=int, default=None)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--debug-perturb", type=float, default=None, help="relative error injected into dual values (failure-path testing)")
    c.set_defaults(func=cmd_crosscheck)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return runner.EXIT_SCHEMA
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
