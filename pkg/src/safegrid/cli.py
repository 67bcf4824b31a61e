"""
Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
numerical error, 3 the safe set emptied during tuning.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from safegrid.config import ConfigError, env_config, experiment_config, load_config
from safegrid.control import PiGains
from safegrid.runner import (
    GAIN_NAMES,
    landscape_sweep,
    read_history_csv,
    replay_optimizer,
    run_episode,
    run_tuning,
)
from safegrid.safeopt import SafeSetEmpty, posterior_on_grid, write_posterior_csv

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_UNSAFE = 0, 1, 2, 3

log = logging.getLogger("safegrid")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _resolution(text: str) -> tuple[int, int]:
    parts = text.lower().replace("x", ",").split(",")
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid resolution {text!r}; use e.g. 60x60") from None
    if len(values) == 1:
        values *= 2
    if len(values) != 2 or min(values) < 1:
        raise argparse.ArgumentTypeError(f"invalid resolution {text!r}; use e.g. 60x60")
    return values[0], values[1]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="safegrid", description=__doc__.splitlines()[1])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key = value config file (defaults are built in)")
        sp.add_argument("--out", required=True, help="output path")

    ep = sub.add_parser("episode", help="run one episode and write its waveform CSV")
    common(ep)
    ep.add_argument("--kp", type=float, required=True, help="proportional gain, V/A")
    ep.add_argument("--ki", type=float, required=True, help="integral gain, V/(A*s)")

    tu = sub.add_parser("tune", help="SafeOpt tuning run (history + GP posterior dumps)")
    common(tu)
    tu.add_argument("--mode", choices=("1d", "2d"), default="1d")
    tu.add_argument("--seed", type=int, default=None, help="rng seed stamped on the run")
    tu.add_argument("--name", help="output file prefix (default: mode + timestamp)")

    la = sub.add_parser("landscape", help="brute-force J over the (kp, ki) bounds")
    common(la)
    la.add_argument("--resolution", type=_resolution, default=(60, 60), help="KPxKI, e.g. 60x60")

    gd = sub.add_parser("gp-dump", help="rebuild the GP after a history episode and dump it")
    common(gd)
    gd.add_argument("--history", required=True, help="history CSV written by 'tune'")
    gd.add_argument("--episode-index", type=int, required=True)
    gd.add_argument("--mode", choices=("1d", "2d"), default="1d")
    return p


def cmd_episode(args, values) -> int:
    cfg = experiment_config(values, "2d")
    rec = run_episode(cfg.env, PiGains(args.kp, args.ki), cfg.scaling, cfg.anti_windup)
    rec.write_csv(args.out)
    print(f"{rec.j:.4f}")
    return EXIT_OK


def cmd_tune(args, values) -> int:
    cfg = experiment_config(values, args.mode, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = args.name or f"{cfg.name}_{time.strftime('%Y%m%d-%H%M%S')}"
    history = run_tuning(cfg)
    history.write_csv(out_dir / f"{name}_history.csv")
    opt = history.optimizer
    names = [GAIN_NAMES[k] for k in cfg.free_dims]
    for it, gp in sorted(history.snapshots.items()):
        cols = posterior_on_grid(gp, opt.grid_norm, cfg.beta, history.j_min)
        write_posterior_csv(out_dir / f"{name}_gp_{it:03d}.csv", names, opt.grid, *cols)
    gains, j = history.best
    print(f"best kp={gains.kp:.6g} ki={gains.ki:.6g} J={j:.4f} "
          f"(J_init={history.j_init:.4f}, episodes={len(history)})")
    if history.terminal:
        print("safe set became empty; tuning stopped", file=sys.stderr)
        return EXIT_UNSAFE
    return EXIT_OK


def cmd_landscape(args, values) -> int:
    cfg = experiment_config(values, "2d")
    land = landscape_sweep(cfg.env, cfg.bounds, args.resolution, scaling=cfg.scaling, anti_windup=cfg.anti_windup)
    land.write_csv(args.out)
    kp, ki, j = land.argmax()
    print(f"argmax kp={kp:.6g} ki={ki:.6g} J={j:.4f}")
    return EXIT_OK


def cmd_gp_dump(args, values) -> int:
    cfg = experiment_config(values, args.mode)
    path = Path(args.history)
    if not path.is_file():
        raise ConfigError(f"history file not found: {path}")
    rows = read_history_csv(path)
    try:
        opt = replay_optimizer(cfg, rows, args.episode_index)
    except IndexError as exc:
        raise ConfigError(str(exc)) from None
    opt.write_posterior_csv(args.out, [GAIN_NAMES[k] for k in cfg.free_dims])
    return EXIT_OK


COMMANDS = {"episode": cmd_episode, "tune": cmd_tune, "landscape": cmd_landscape, "gp-dump": cmd_gp_dump}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        values = load_config(args.config)
        env_config(values)
        return COMMANDS[args.command](args, values)
    except ConfigError as exc:
        print(f"safegrid: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SafeSetEmpty as exc:
        print(f"safegrid: {exc}", file=sys.stderr)
        return EXIT_UNSAFE
    except (OSError, ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"safegrid: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
