"""
Radar-camera fusion bench command line.

Usage (from the repository root):
    python -m src.cli.main gen --n-scenes 50 --scenes scenes/train
    python -m src.cli.main train --scenes scenes/train --out runs/full
    python -m src.cli.main infer --scenes scenes/val --checkpoint runs/full/model --out runs/full/detections.json
    python -m src.cli.main eval runs/full/detections.json --scenes scenes/val --out runs/full/eval
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from src.cli.commands import DETECTIONS_NAME, CommandResult, cmd_eval, cmd_gen, cmd_infer, cmd_train, load_scenes
from src.cli.run_config import STAGES, RunConfig
from src.db.schema import finish_run, init_db, log_metric, start_run
from src.errors import FusionError

from config.settings import DEFAULT_CONFIG, LOG_FORMAT, LOG_LEVEL

logger = logging.getLogger(__name__)

COMMANDS = ("gen", "train", "infer", "eval")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Radar-camera fusion bench: simulate, train, detect, evaluate",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    # 50 training scenes with seed 3
    python -m src.cli.main gen --n-scenes 50 --seed 3 --scenes scenes/train

    # Camera-only baseline
    python -m src.cli.main train --scenes scenes/train --ablate "" --out runs/base

    # Compare two runs (table rows follow argument order)
    python -m src.cli.main eval runs/base/detections.json runs/full/detections.json --scenes scenes/val

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric abort.
        """
    )
    parser.add_argument("command", choices=COMMANDS, help="What to run")
    parser.add_argument(
        "detections",
        nargs="*",
        help="eval only: detection files, the first is the comparison baseline"
    )
    parser.add_argument(
        "--config", "-c",
        help=f"Run configuration JSON (default: {DEFAULT_CONFIG} when present)"
    )
    parser.add_argument("--seed", type=int, help="Override the configured seed")
    parser.add_argument("--scenes", help="Scene directory (default: config scenes_dir)")
    parser.add_argument("--checkpoint", help="Checkpoint to load (infer) or resume from (train)")
    parser.add_argument("--out", "-o", help="Output directory, or detection file for infer")
    parser.add_argument(
        "--ablate",
        help=f"Comma list of enabled stages out of {','.join(STAGES)}; empty string disables all"
    )
    parser.add_argument("--n-scenes", type=int, default=10, help="gen only: number of scenes")
    parser.add_argument("--workers", type=int, help="Scene-level threads")
    parser.add_argument("--no-ledger", action="store_true", help="Do not record the run in the ledger")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Configuration file (or defaults) with command-line overrides applied."""
    if args.config:
        config = RunConfig.load(args.config)
    elif os.path.exists(DEFAULT_CONFIG):
        config = RunConfig.load(DEFAULT_CONFIG)
    else:
        config = RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = config.replace(**overrides)
    if args.ablate is not None:
        config = config.with_stages(args.ablate.split(","))
    return config


def run_command(args: argparse.Namespace, config: RunConfig) -> CommandResult:
    scenes_dir = args.scenes or config.scenes_dir
    if args.command == "gen":
        return cmd_gen(config, args.n_scenes, scenes_dir)

    scenes = load_scenes(scenes_dir, config.workers)
    if args.command == "train":
        out = args.out or os.path.join(config.out_dir, config.config_hash()[:12])
        return cmd_train(config, scenes, out, resume=args.checkpoint)
    if args.command == "infer":
        out = args.out or os.path.join(config.out_dir, config.config_hash()[:12], DETECTIONS_NAME)
        return cmd_infer(config, args.checkpoint, scenes, out)
    out = args.out or os.path.join(config.out_dir, "eval")
    return cmd_eval(args.detections, scenes, out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    log_level = logging.DEBUG if args.verbose else getattr(logging, LOG_LEVEL)
    logging.basicConfig(level=log_level, format=LOG_FORMAT)

    if args.detections and args.command != "eval":
        print(f"Error: detection files are only accepted by eval, not {args.command}")
        return 2

    run_id = None
    config = None
    try:
        config = resolve_config(args)
        print("=" * 60)
        print(f"{args.command}  config {config.config_hash()[:12]}  stages {','.join(config.stages) or '-'}")
        print("=" * 60)
        print(config.dump())
        print("=" * 60)

        if not args.no_ledger:
            init_db(config.db_path)
            run_id = start_run(
                args.command, config.config_hash(), seed=config.seed,
                out_path=args.out or args.scenes, stages=",".join(config.stages),
                db_path=config.db_path,
            )

        result = run_command(args, config)

        if run_id is not None:
            for name, value in sorted(result.metrics.items()):
                log_metric(run_id, name, value, db_path=config.db_path)
            finish_run(run_id, "ok", db_path=config.db_path)
        print(f"\n{args.command} done -> {Path(result.out_path)}")
        return 0

    except FusionError as e:
        logger.error(f"{type(e).__name__}: {e}")
        if run_id is not None:
            finish_run(run_id, "failed", db_path=config.db_path)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
