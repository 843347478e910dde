# Copyright (c) Meta Platforms, Inc. and affiliates.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import argparse

from .common import RunMode


def get_parser():
    """
    Returns an ArgumentParser instance for the hypcmc command line tool.

    A run is described entirely by its JSON config; the parser only adds the config path, a mode
    override, the output directory and the log level.
    """
    parser = argparse.ArgumentParser(
        description="Asymptotic Plateau solver and verification harness for CMC Killing graphs in hyperbolic space."
    )

    add_run_args(parser)

    parser.add_argument(
        "-o",
        "--out-dir",
        type=str,
        default=None,
        help="Output directory for result files. Overrides output.directory of the config.",
    )

    parser.add_argument(
        "-l",
        "--loglevel",
        type=str,
        default="info",
        help="Log level to report messages (debug, info, warning, error).",
    )

    return parser


def add_run_args(parser):
    """
    Adds run-related arguments to the parser.

    The added arguments include the config path and the mode override.
    """
    parser.add_argument(
        "--config",
        type=str,
        required=True,
        help="Run config file (JSON) with mode, problem, solver and output sections.",
    )

    parser.add_argument(
        "--mode",
        type=str,
        default=None,
        choices=[x.value for x in RunMode],
        help=f"Override the mode of the config. Must be one of {[x.value for x in RunMode]}",
    )


def get_clean_args(args):
    """
    Returns a tuple of model arguments and run arguments based on the input arguments.

    The model arguments include out_dir, and the run arguments include the config path and mode.
    """
    model_args = dict(out_dir=args.out_dir)
    run_args = dict(config=args.config, mode=args.mode)
    return model_args, run_args
