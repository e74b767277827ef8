"""``worldlens`` command line: validate, extract, sweep, figure4, gen-world.

Exit codes: 0 success, 1 invalid input or world, 2 precondition refusal,
3 a run exceeded its error bound.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..extraction import PreconditionError
from ..mdp import WorldError, validate_world
from ..worldfile import format_world, load_world, random_world
from .config import ConfigError, ExperimentConfig, WorldSource, _parse_method, load_config, parse_param, parse_triple
from .runs import (
    EXTRACT_COLUMNS,
    BoundViolation,
    format_csv,
    run_extract,
    run_sweep,
    sweep_footer,
    timing_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_PRECONDITION, EXIT_BOUND = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _world_flags(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--world", help="world file")
    src.add_argument("--builtin", help="builtin world: chain, fail or three")
    src.add_argument("--random", metavar="SEED:STATES:ACTIONS", help="generated world")
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE", help="builtin parameter (repeatable)")


def _run_flags(p):
    p.add_argument("--config", help="key = value experiment file; flags override it")
    p.add_argument("--triple", action="append", metavar="S,A,S'", help="triple to extract, or 'all' (repeatable)")
    p.add_argument("--method", choices=["t1", "t2", "t3", "t4", "t4d"])
    p.add_argument("--n", type=int, action="append", help="query depth parameter (repeatable)")
    p.add_argument("--delta", type=float, action="append", help="agent slack δ (repeatable)")
    p.add_argument("--agent", choices=["optimal", "random", "adversarial"])
    p.add_argument("--seed", type=int, action="append", help="agent seed (repeatable)")
    p.add_argument("--vary", metavar="NAME", help="builtin parameter set from each --p value")
    p.add_argument("--p", type=float, action="append", help="value for the --vary parameter (repeatable)")
    p.add_argument("--out", help="CSV output path; figures are written next to it")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="worldlens", description="Recover world models from goal-conditioned agents.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a world is a valid communicating cMDP")
    _world_flags(p)

    p = sub.add_parser("extract", help="extract kernel entries from a synthesized agent")
    _world_flags(p)
    _run_flags(p)

    p = sub.add_parser("sweep", help="error against n over a grid, with fitted slopes")
    _world_flags(p)
    _run_flags(p)

    p = sub.add_parser("figure4", help="tail curves, sampled first actions and crossover spread")
    p.add_argument("--p", type=float, default=0.35)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=200)
    p.add_argument("--out", default="figure4.csv")

    p = sub.add_parser("gen-world", help="write a random communicating world file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--states", type=int, required=True)
    p.add_argument("--actions", type=int, required=True)
    p.add_argument("--out", help="output file (stdout if omitted)")
    return ap


def _world_source(args) -> WorldSource | None:
    params = tuple(parse_param(x) for x in args.param)
    if args.world:
        if params:
            raise ConfigError("--param only applies to builtin worlds")
        return WorldSource("file", args.world)
    if args.builtin:
        return WorldSource("builtin", args.builtin, params)
    if args.random:
        return WorldSource.parse("random:" + args.random)
    if params:
        raise ConfigError("--param needs --builtin")
    return None


def _experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    src = _world_source(args)
    triples = None
    if args.triple:
        triples = "all" if args.triple == ["all"] else tuple(parse_triple(t) for t in args.triple)
    cfg = cfg.with_overrides(
        world=src,
        triples=triples,
        method=_parse_method(args.method) if args.method else None,
        n_grid=tuple(args.n) if args.n else None,
        delta_grid=tuple(args.delta) if args.delta else None,
        agent=args.agent,
        seeds=tuple(args.seed) if args.seed else None,
        vary=args.vary,
        p_grid=tuple(args.p) if args.p else None,
        out=args.out,
    )
    return cfg.validate()


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_validate(args) -> int:
    src = _world_source(args)
    if src is None:
        raise ConfigError("give --world, --builtin or --random")
    try:
        world = src.build(check=False)
    except WorldError as e:
        print(f"invalid: {e}")
        return EXIT_INVALID
    report = validate_world(world)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_INVALID


def _violation(e: BoundViolation, out: str | None) -> int:
    text = "\n\n".join(e.dumps) + "\n"
    if out:
        Path(out + ".violations.txt").write_text(text, encoding="utf-8")
    print(f"error: {e}", file=sys.stderr)
    print(text, file=sys.stderr)
    return EXIT_BOUND


def cmd_extract(args) -> int:
    cfg = _experiment(args)
    try:
        rows, _ = run_extract(cfg)
    except BoundViolation as e:
        return _violation(e, cfg.out)
    _write(cfg.out, format_csv(rows, EXTRACT_COLUMNS))
    if cfg.out:
        from .figures import plot_extract

        plot_extract(rows, Path(cfg.out))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _experiment(args)
    out = cfg.out or "sweep.csv"
    try:
        rows, walls = run_sweep(cfg)
    except BoundViolation as e:
        return _violation(e, out)
    Path(out).write_text(format_csv(rows, footer=sweep_footer(rows)), encoding="utf-8")
    Path(out + ".timing.csv").write_text(timing_csv(rows, walls), encoding="utf-8")
    from .figures import plot_sweep

    plot_sweep(rows, Path(out))
    for line in sweep_footer(rows):
        print(line)
    return EXIT_OK


def cmd_figure4(args) -> int:
    from .figure4 import figure4, figure4_csv
    from .figures import plot_figure4

    if not 0 <= args.delta < 0.5:
        raise PreconditionError(f"delta={args.delta} >= 1/2")
    fig = figure4(args.p, args.n, args.delta, args.seed, args.draws)
    Path(args.out).write_text(figure4_csv(fig), encoding="utf-8")
    plot_figure4(fig, Path(args.out))
    print(f"epsilon={fig.epsilon!r} boundary={fig.boundary!r} crossovers={fig.crossover_counts} majority={fig.majority}")
    return EXIT_OK


def cmd_gen_world(args) -> int:
    world = random_world(args.seed, args.states, args.actions)
    _write(args.out, format_world(world))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "extract": cmd_extract,
    "sweep": cmd_sweep,
    "figure4": cmd_figure4,
    "gen-world": cmd_gen_world,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except PreconditionError as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ConfigError, WorldError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
