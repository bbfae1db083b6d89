# main.py - Entry point: logging setup + subcommand dispatch
import argparse
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

from backend.config.parser import load_config  # noqa: E402
from backend.config.settings import DEFAULT_OUTPUT_DIR, LOG_LEVEL  # noqa: E402
from backend.errors import HorseshoeLabError  # noqa: E402
from backend.graph.workflow import SUBCOMMANDS, run_pipeline  # noqa: E402

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_FILE = 'horseshoe.log'

logger = logging.getLogger(__name__)


def setup_logging(out_dir: Path, level: str = LOG_LEVEL):
    out_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format=LOG_FORMAT,
        handlers=[
            logging.StreamHandler(sys.stdout),
            logging.FileHandler(out_dir / LOG_FILE),
        ],
        force=True,
    )


def parse_overrides(pairs):
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise argparse.ArgumentTypeError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="horseshoe",
        description="Lagrangian chaos lab for stochastically forced 2D Navier-Stokes flow on the torus",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="key = value config file")
        p.add_argument("--out", type=Path, default=None, help=f"output directory (default {DEFAULT_OUTPUT_DIR}/{name})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--seed", type=str, default=None)
        p.add_argument("--workers", type=str, default=None)
        p.add_argument("--log-level", default=LOG_LEVEL)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = args.out or DEFAULT_OUTPUT_DIR / args.subcommand
    setup_logging(out_dir, args.log_level.upper())

    logger.info("=" * 50)
    logger.info(f"horseshoe {args.subcommand} -> {out_dir}")
    logger.info("=" * 50)

    try:
        overrides = parse_overrides(args.set)
        for key in ("seed", "workers"):
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        config = load_config(args.config, overrides)
    except (HorseshoeLabError, argparse.ArgumentTypeError) as e:
        logger.error(f"✗ Configuration rejected: {e}")
        return getattr(e, "exit_code", 2)

    state = run_pipeline(args.subcommand, config, out_dir, args.config)
    if state["exit_code"] == 0:
        for name, value in state.get("summary", {}).items():
            logger.info(f"  {name}: {value}")
    return state["exit_code"]


if __name__ == '__main__':
    sys.exit(main())
