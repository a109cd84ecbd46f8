"""Command-line entry point.

    vlcwdma run --room A --scenario 1 --order 2 --solver exact --out runs/a1

``--room`` takes a preset id (A/B/C) or a YAML config file; ``--scenario``
takes 1/2 or a YAML file whose ``users`` section lists positions.
"""

from __future__ import annotations

import argparse
import os
import sys

import yaml

from . import allocator
from .experiment import (
    ConfigError,
    ExperimentConfig,
    load_config,
    preset_config,
    run_experiment,
    scenario_preset,
)
from .geometry import Vec3
from .scene import SceneValidationError, standard_room
from .link import UnsupportedLinkError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlcwdma",
                                     description="Indoor visible-light WDMA link simulator and optimizer")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the full scene -> gains -> allocation -> report pipeline")
    run.add_argument("--room", required=True, help="preset id (A/B/C) or YAML config path")
    run.add_argument("--scenario", default=None, help="preset scenario (1/2) or YAML file with users")
    run.add_argument("--order", type=int, default=2, choices=(0, 1, 2), help="max reflection order")
    run.add_argument("--solver", default="exact", choices=("exact", "greedy", "exhaustive"))
    run.add_argument("--out", required=True, help="output directory for the run artifacts")
    run.add_argument("--k", type=int, default=16, help="candidate cap per user")
    run.add_argument("--objective", default="db", choices=("db", "linear"))
    run.add_argument("--element-size", type=float, default=None,
                     help="first-order element edge in metres (second order uses twice this)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--workers", type=int, default=1)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    solver_cfg = allocator.SolverConfig(objective=args.objective, k=args.k)
    overrides = dict(
        solver_mode=args.solver,
        solver=solver_cfg,
        max_order=args.order,
        out_dir=args.out,
        seed=args.seed,
        workers=args.workers,
    )
    if args.element_size is not None:
        overrides["dx1_m"] = args.element_size
        overrides["dx2_m"] = 2.0 * args.element_size

    if os.path.exists(args.room):
        config = load_config(args.room)
        for key, val in overrides.items():
            setattr(config, key, val)
        if args.scenario and os.path.exists(args.scenario):
            config.users = _users_from_file(args.scenario)
            config.scenario_label = ""
        elif args.scenario and config.room.name in ("A", "B", "C"):
            config.users = scenario_preset(config.room.name, int(args.scenario))
            config.scenario_label = str(int(args.scenario))
        config.validate()
        return config

    if args.room.upper() in ("A", "B", "C"):
        if args.scenario is None:
            raise ConfigError(["--scenario is required with a preset room"])
        if os.path.exists(args.scenario):
            room = standard_room(args.room)
            config = ExperimentConfig(room=room, users=_users_from_file(args.scenario),
                                      room_label=room.name, **overrides)
            config.validate()
            return config
        return preset_config(args.room, int(args.scenario), **overrides)

    raise ConfigError([f"--room {args.room!r} is neither a preset id nor an existing file"])


def _users_from_file(path: str) -> list[Vec3]:
    with open(path, "r") as fh:
        raw = yaml.safe_load(fh)
    entries = raw.get("users", raw) if isinstance(raw, dict) else raw
    if not isinstance(entries, list) or not entries:
        raise ConfigError([f"{path} must list user positions under 'users'"])
    users = []
    for entry in entries:
        vals = [float(v) for v in entry]
        if len(vals) == 2:
            vals.append(1.0)
        users.append(Vec3(*vals))
    return users


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        result = run_experiment(config)
        return result.exit_code
    except (ConfigError, SceneValidationError) as exc:
        for msg in getattr(exc, "errors", [str(exc)]):
            print(f"error: {msg}", file=sys.stderr)
        return 2
    except (allocator.InfeasibleUserError, allocator.SearchSpaceLimitError,
            UnsupportedLinkError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
