"""Command line: ``commgate {run,sweep,eval,plotdata,audit,presets}``."""
from __future__ import annotations

import argparse
import json
import sys

from .config import PRESETS, ConfigError, ExperimentConfig, _parse_scalar, apply_overrides, preset
from .experiment import RunAborted, audit, emit_plotdata, eval_checkpoint, run, sweep


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with an [experiment] section and optional [env] section")
    p.add_argument("--preset", help=f"named configuration ({len(PRESETS)} available; see `presets`)")
    p.add_argument("--env")
    p.add_argument("--arch")
    p.add_argument("--gate", help="gs, reinforce, always_on, always_off or random:P")
    p.add_argument("--penalty", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="training budget in environment steps")
    p.add_argument("--multitask", type=_bool)
    p.add_argument("--forwarding", type=_bool)
    p.add_argument("--out")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any other configuration key; env.KEY sets an environment parameter")


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if args.preset:
            raise ConfigError("preset", "give either --config or --preset, not both")
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ExperimentConfig()
    values = {k: getattr(args, k) for k in ("env", "arch", "gate", "penalty", "seed", "steps",
                                           "multitask", "forwarding", "out")}
    env_params = {}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(key, "--set expects KEY=VALUE")
        if key.startswith("env."):
            env_params[key[4:]] = _parse_scalar(val)
        else:
            values[key] = val
    return apply_overrides(cfg, values, env_params or None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="commgate", description="Gated-communication multi-agent training")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="train one seed")
    _add_config_args(p)
    p.add_argument("--quiet", action="store_true")
    p = sub.add_parser("sweep", help="train several seeds in separate processes")
    _add_config_args(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--jobs", type=int, default=1)
    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("run_dir")
    p.add_argument("--checkpoint")
    p.add_argument("--episodes", type=int)
    p = sub.add_parser("plotdata", help="write per-metric series files")
    p.add_argument("source", help="metrics.csv or a directory of runs")
    p.add_argument("--out", required=True)
    p = sub.add_parser("audit", help="recompute summary.json from the episode log")
    p.add_argument("run_dir")
    sub.add_parser("presets", help="list preset names")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    log = None if getattr(args, "quiet", False) else (lambda msg: print(msg, flush=True))
    try:
        if args.command == "presets":
            print("\n".join(sorted(PRESETS)))
        elif args.command == "run":
            result = run(_config_from_args(args), log=log)
            print(json.dumps(result.summary["metrics"], indent=2, sort_keys=True))
        elif args.command == "sweep":
            pooled = sweep(_config_from_args(args), args.seeds, jobs=args.jobs, log=log)
            print(json.dumps(pooled["metrics"], indent=2, sort_keys=True))
        elif args.command == "eval":
            summary = eval_checkpoint(args.run_dir, args.checkpoint, args.episodes)
            print(json.dumps(summary["metrics"], indent=2, sort_keys=True))
        elif args.command == "plotdata":
            for path in emit_plotdata(args.source, args.out):
                print(path)
        elif args.command == "audit":
            problems = audit(args.run_dir)
            for line in problems:
                print(line)
            if problems:
                return 1
            print("summary matches episode log")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except RunAborted as exc:
        print(str(exc), file=sys.stderr)
        return 3
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
