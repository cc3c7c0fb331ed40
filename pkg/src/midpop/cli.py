"""Command line interface.

Subcommands:
  run <config>      run a scenario (built-in name or JSON/TOML file)
  list-scenarios    print the built-in scenario names
  check             run the full verification suite

Exit codes: 0 on success/all-pass, 1 on an envelope or criterion failure,
2 on a configuration error.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

from .errors import ConfigError, MidpopError
from .runner import load_config, run_scenario
from .scenarios import builtin_scenario, scenario_names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="midpop",
        description="Simulate trait-structured populations with midpoint "
                    "inheritance and trait-dependent selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario")
    run_p.add_argument("config", help="built-in scenario name or path to a JSON/TOML config")
    run_p.add_argument("--out", default="out", help="artifact directory (default: ./out)")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the particle seed offset")
    run_p.add_argument("--threads", type=int, default=1,
                       help="worker threads for multi-seed particle runs")

    sub.add_parser("list-scenarios", help="list built-in scenarios")

    check_p = sub.add_parser("check", help="run the verification suite")
    check_p.add_argument("--out", default=None,
                         help="artifact directory (default: a temporary one)")
    check_p.add_argument("--seed", type=int, default=None, help="unused, reserved")
    check_p.add_argument("--threads", type=int, default=1,
                         help="worker threads for multi-seed particle runs")
    check_p.add_argument("--only", type=int, nargs="*", default=None,
                         help="run only these criterion numbers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-scenarios":
            for name in scenario_names():
                print(name)
            return 0
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check":
            return _cmd_check(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except MidpopError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 2


def _cmd_run(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["particle"] = {"seed_offset": args.seed}
    if args.config in scenario_names():
        cfg = builtin_scenario(args.config, overrides or None)
    else:
        if not Path(args.config).exists():
            raise ConfigError(f"no such scenario or config file: {args.config}")
        cfg = load_config(args.config)
        if args.seed is not None and cfg.particle is not None:
            cfg.particle["seed_offset"] = args.seed
    summary = run_scenario(cfg, args.out, threads=args.threads)
    envelopes = summary.get("envelopes", {})
    all_pass = all(e["pass"] for e in envelopes.values())
    cross = summary.get("cross_solver")
    if cross:
        all_pass = all_pass and all(c["pass"] for c in cross["checks"].values())
    print(f"scenario {cfg.name}: artifacts in {args.out}")
    for name, env in envelopes.items():
        print(f"  envelope {name}: {'pass' if env['pass'] else 'FAIL'} "
              f"(max ratio {env['max_ratio']:.4g})")
    for name, fit in summary.get("fits", {}).items():
        print(f"  fit {name}: rate {fit['value']:.6g} on window {fit['window']}")
    return 0 if all_pass else 1


def _cmd_check(args) -> int:
    from .acceptance import run_all

    out = args.out or tempfile.mkdtemp(prefix="midpop-check-")
    numbers = set(args.only) if args.only else None
    results = run_all(out, numbers=numbers)
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed; artifacts in {out}")
    return 0 if not failed else 1


if __name__ == "__main__":
    raise SystemExit(main())
