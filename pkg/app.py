import argparse
import json
import logging
import sys
from pathlib import Path

from src.island_resonances.scenario import COMMANDS, EXPERIMENTS, preset, run_scenario
from src.island_resonances.utils.cache import ResultCache
from src.island_resonances.utils.errors import IslandResonanceError, StageError
from src.island_resonances.utils.export import dumps

logger = logging.getLogger("island_resonances")

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_PROPERTY_FAILURE = 2


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON document with ScenarioConfig overrides")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, help="overrides the seed of the config")
    common.add_argument("--threads", type=int, default=1, help="worker threads for theta lists and contours")
    common.add_argument("--no-cache", action="store_true", help="do not read or write the result cache")
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")

    parser = argparse.ArgumentParser(
        prog="island-resonances",
        description="Resonances of a well in an island: operators, spectra, counting checks and reports.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        commands.add_parser(name, parents=[common], help=f"run the {name} stage")
    experiment = commands.add_parser("experiment", parents=[common], help="run a named acceptance experiment")
    experiment.add_argument("name", choices=sorted(EXPERIMENTS))
    cache = commands.add_parser("cache", parents=[common], help="result cache maintenance")
    cache.add_argument("action", choices=["gc"])
    cache.add_argument("--max-age-days", type=float, help="remove entries older than this (default: 30)")
    return parser


def configure_logging(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def load_overrides(args):
    overrides = {}
    if args.config is not None:
        overrides = json.loads(args.config.read_text())
        overrides.pop("experiment", None)
    if args.seed is not None:
        overrides["seed"] = args.seed
    return overrides


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    if args.command == "cache":
        removed = ResultCache(args.out).gc(args.max_age_days)
        print(dumps({"command": "cache gc", "removed": removed}))
        return EXIT_PASS

    name = args.name if args.command == "experiment" else args.command
    try:
        config = preset(name, **load_overrides(args))
        cache = None if args.no_cache else ResultCache(args.out)
        bundle = run_scenario(config, out_dir=args.out, cache=cache, workers=args.threads)
    except StageError as err:
        logger.error(f"stage {err.stage} failed: {err.cause}")
        return EXIT_ERROR
    except (IslandResonanceError, ValueError, OSError) as err:
        logger.error(str(err))
        return EXIT_ERROR

    summary = {
        "experiment": bundle.experiment,
        "config_hash": bundle.config_hash,
        "passed": bundle.passed,
        "properties": bundle.properties,
        "summary": bundle.summary,
        "out": args.out,
    }
    print(dumps(summary))
    return EXIT_PASS if bundle.passed else EXIT_PROPERTY_FAILURE


if __name__ == "__main__":
    sys.exit(main())
