import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import ValidationError

from app import __version__
from app.api.commands import COMMANDS, LEMMAS
from app.api.schemas import ExperimentConfig
from app.config import apply_overrides, get_settings, reset_overrides
from app.errors import ConfigError
from app.services.report_service import emit, provenance, to_json_text, write_provenance
from app.utils.validators import parse_float_list, parse_int_list

logger = logging.getLogger(__name__)


class UsageError(ConfigError):
    """Bad command line"""


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common_options() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--output", help="output file (bare names go to OUTPUT_DIR); stdout when omitted")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--log-level", dest="log_level")
    common.add_argument("--workers", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--graph", help="family:size, e.g. complete:16, or a saved chain .json")
    common.add_argument("--marked", help="index list '0,3', 'single' or 'fraction:rho'")
    common.add_argument("--cT", dest="c_T", type=float)
    return common


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="app.main", description="Continuous-time quantum walk search experiments")
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="subcommand", parser_class=ArgumentParser)
    common = _common_options()

    search = subparsers.add_parser("search", parents=[common], help="run the search algorithm")
    search.add_argument("--max-rounds", dest="max_rounds", type=int)
    search.add_argument("--ht-estimate", dest="ht_estimate", type=float)
    search.add_argument("--randomize-T", dest="randomize_T", action="store_true", default=None)

    scaling = subparsers.add_parser("scaling", parents=[common], help="sweep graph sizes")
    scaling.add_argument("--family")
    scaling.add_argument("--sizes", type=parse_int_list)

    verify = subparsers.add_parser("verify", parents=[common], help="check an inequality numerically")
    verify.add_argument("--lemma", choices=LEMMAS)
    verify.add_argument("--T")
    verify.add_argument("--s", type=float)
    verify.add_argument("--quadrature", choices=["trapezoid", "exact"])

    fastforward = subparsers.add_parser("fastforward", parents=[common], help="fast-forwarding bound vs exact")
    fastforward.add_argument("--s", type=float)
    fastforward.add_argument("--times", type=parse_float_list)

    groundstate = subparsers.add_parser("groundstate", parents=[common], help="ground-state preparation")
    groundstate.add_argument("--hamiltonian", help="random:<dim>, chain:<family:size> or a .json matrix file")
    groundstate.add_argument("--eta", type=float)
    groundstate.add_argument("--epsilon", type=float)
    groundstate.add_argument("--energy-precision", dest="energy_precision", type=float)
    groundstate.add_argument("--ancilla", action="store_true", default=None)
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    values: Dict = {}
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config file '{args.config}': {e}")
        if not isinstance(values, dict):
            raise ConfigError("Config file must hold a JSON object")
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "log_level")}
    values.update(flags)
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e.errors()[0]['msg']}")


def run(argv: List[str]) -> int:
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if args.subcommand is None:
        raise UsageError("a subcommand is required")

    logging.basicConfig(
        level=(args.log_level or get_settings().LOG_LEVEL).upper(),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)

    config = load_config(args)
    try:
        apply_overrides(config.tolerances)
    except ValueError as e:
        raise ConfigError(str(e))

    records, model = COMMANDS[config.subcommand](config)
    text = emit(records, config.format, config.output, model)
    if config.output:
        write_provenance(config, config.output)
    else:
        sys.stdout.write(text)
        logger.info(f"provenance {to_json_text(provenance(config))}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except ConfigError as e:
        code = 2
        error = e
    except (ValueError, OSError) as e:
        code = 1
        error = e
    finally:
        reset_overrides()
    sys.stderr.write(json.dumps({"error": type(error).__name__, "message": str(error)}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
