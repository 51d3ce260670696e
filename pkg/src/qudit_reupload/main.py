import multiprocessing
import sys

import colorama

from qudit_reupload.checkpoint import load_checkpoint
from qudit_reupload.cli_parser import (
    build_experiment_config,
    default_output,
    describe_config,
    parse_arguments,
    parse_state_spec,
)
from qudit_reupload.errors import ConfigError, QuditReuploadError
from qudit_reupload.experiment import run_experiment
from qudit_reupload.learn import STATUS_OK
from qudit_reupload.logger import get_logger, setup_logging
from qudit_reupload.render import render_husimi, render_regions, save_ppm, spectrum

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2
EXIT_IO_ERROR = 3

logger = get_logger()


def command_run(args) -> int:
    config = build_experiment_config(args.config, args.output_dir, args.workers)
    records, _ = run_experiment(config)
    if not any(r.status == STATUS_OK for r in records):
        logger.error("Every training run aborted")
        return EXIT_RUNTIME_ERROR
    return EXIT_OK


def command_validate(args) -> int:
    config = build_experiment_config(args.config)
    for key, value in describe_config(config).items():
        logger.info(f"  {key}: {value}")
    logger.success(f"{args.config} is valid")
    return EXIT_OK


def command_render_regions(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    label_states = checkpoint.label_states()
    # qubit baseline labels index label states directly
    inverse = checkpoint.inverse_assignment() if label_states is None else None
    image = render_regions(checkpoint.spec, checkpoint.params, args.grid, inverse, label_states)
    save_ppm(image, args.output or default_output(args.checkpoint, "_regions.ppm"))
    return EXIT_OK


def command_render_husimi(args) -> int:
    state = parse_state_spec(args.state, args.dim)
    save_ppm(render_husimi(state, args.resolution), args.output)
    return EXIT_OK


def command_spectrum(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    output = args.output or default_output(args.checkpoint, "_spectrum.csv")
    spectrum(checkpoint.spec, checkpoint.params, args.grid, output)
    return EXIT_OK


COMMANDS = {
    "run": command_run,
    "validate": command_validate,
    "render-regions": command_render_regions,
    "render-husimi": command_render_husimi,
    "spectrum": command_spectrum,
}


def main(argv=None) -> int:
    # Initialize colorama for cross-platform colored output
    colorama.init(autoreset=True)

    args = parse_arguments(argv)

    setup_logging(
        verbose=getattr(args, "verbose", False),
        quiet=getattr(args, "quiet", False),
        log_file=getattr(args, "log_file", None),
    )

    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        return EXIT_CONFIG_ERROR
    except (QuditReuploadError, ValueError) as e:
        logger.error(str(e))
        return EXIT_RUNTIME_ERROR
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO_ERROR
    finally:
        logger.close_file_handler()


if __name__ == "__main__":
    multiprocessing.freeze_support()
    sys.exit(main())
