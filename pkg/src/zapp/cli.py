"""Command line: ``zapp run``, ``zapp compare`` and ``zapp selftest``.

Exit codes: 0 success, 1 configuration error, 2 internal error, 3 self-test
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import traceback
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .metrics import MetricsTable

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL, EXIT_SELFTEST = 0, 1, 2, 3

log = logging.getLogger("zapp")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("zapp-out"), help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for episodes")
    common.add_argument("--seed", type=int, default=None, help="override the scene seed base")
    common.add_argument("--no-plots", action="store_true", help="skip SVG plots")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="zapp", description="Zonotope contingency MPC hallway benchmark")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one experiment config")
    r.add_argument("config", type=Path)
    c = sub.add_parser("compare", parents=[common], help="paired comparison of several configs")
    c.add_argument("configs", type=Path, nargs="+")
    s = sub.add_parser("selftest", parents=[common], help="run the oracle checks")
    s.add_argument("--scale", type=float, default=1.0, help="multiplier on instance counts")
    return p


def _load(path: Path, seed: int | None) -> ExperimentConfig:
    cfg = load_config(path)
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = replace(cfg, seed=seed)
    return cfg


def cmd_run(args) -> int:
    from .experiment import run_experiment, write_results

    try:
        cfg = _load(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    results = run_experiment(cfg, args.jobs)
    out: Path = args.out
    row = write_results(results, out, plots=not args.no_plots)
    table = MetricsTable([row])
    (out / "metrics.csv").write_text(table.to_csv())
    (out / "metrics.txt").write_text(table.to_text())
    print(table.to_text(), end="")
    log.info("%d episodes in %.1f s", len(results), time.perf_counter() - t0)
    return EXIT_OK


def cmd_compare(args) -> int:
    from .experiment import run_experiment, write_results

    if len(args.configs) < 2:
        print("config error: compare needs at least two configs", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfgs = [_load(p, args.seed) for p in args.configs]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seeds = [tuple(c.seeds) for c in cfgs]
    if any(s != seeds[0] for s in seeds):
        print("config error: configs do not share the same scene seeds", file=sys.stderr)
        return EXIT_CONFIG
    labels = [c.label for c in cfgs]
    if len(set(labels)) != len(labels):
        # Same variant twice: disambiguate by position so outputs do not collide.
        cfgs = [replace(c, name=f"{c.label}#{i}") for i, c in enumerate(cfgs)]
    table = MetricsTable()
    for cfg in cfgs:
        results = run_experiment(cfg, args.jobs)
        table.add(write_results(results, args.out / _safe(cfg.label), plots=not args.no_plots))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "compare.csv").write_text(table.to_csv())
    (args.out / "compare.txt").write_text(table.to_text())
    print(table.to_text(), end="")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .oracles import run_selftest

    checks = run_selftest(seed=args.seed or 0, scale=args.scale)
    for c in checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail} ({c.seconds:.1f} s)")
    ok = all(c.passed for c in checks)
    print("selftest passed" if ok else "selftest FAILED")
    return EXIT_OK if ok else EXIT_SELFTEST


def _safe(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("config error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    handler = {"run": cmd_run, "compare": cmd_compare, "selftest": cmd_selftest}[args.command]
    try:
        return handler(args)
    except Exception:  # noqa: BLE001 - top-level guard maps crashes to exit code 2
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
