# Copyright (c) Meta Platforms, Inc. and affiliates.

# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import logging
import sys

LOGGER_NAME = "HYPCMC"

# Color palette constants
COLOR_PALETTE = {
    "yellow": "\x1b[33;20m",
    "green": "\033[92m",
    "red": "\x1b[31;20m",
    "bold_white": "\033[1m",
    "bold_red": "\x1b[31;1m",
    "reset": "\x1b[0m",
}

LEVEL_COLORS = {
    logging.DEBUG: "green",
    logging.INFO: "bold_white",
    logging.WARNING: "yellow",
    logging.ERROR: "red",
    logging.CRITICAL: "bold_red",
}

RECORD_PREFIX = "[%(module)24s - "
RECORD_POSTFIX = " %(message)s"


class HYPCMCFormatter(logging.Formatter):
    """
    Log formatter for the solver and verification pipelines.

    Every record is prefixed with the emitting module and a colorized level name so
    that Newton traces from different modules stay readable in one stream.
    """

    PREFIX = RECORD_PREFIX
    POSTFIX = RECORD_POSTFIX
    LEVEL_FORMATS = {
        level: RECORD_PREFIX + f"{COLOR_PALETTE[color]}%(levelname)s{COLOR_PALETTE['reset']}" + RECORD_POSTFIX
        for level, color in LEVEL_COLORS.items()
    }

    def format(self, record):
        """
        Format a log record using the per-level format.

        Args:
            record (logging.LogRecord): The log record to format.

        Returns:
            str: The formatted log record.
        """
        level_format = self.LEVEL_FORMATS.get(record.levelno, self.PREFIX + "%(levelname)s" + self.POSTFIX)
        formatter = logging.Formatter(level_format)
        return formatter.format(record)


def clear_handlers():
    """
    Remove every handler except the stdout stream handler from the package logger.

    Used between runs so that a log file opened by one run is closed before the next one starts.
    """
    logger = logging.getLogger(LOGGER_NAME)
    for handler in list(logger.handlers):
        if not type(handler) is logging.StreamHandler:
            logger.removeHandler(handler)
            handler.close()


def setup_logger(file_name=None, loglevel=None):
    """
    Set up the package logger with an optional log file and log level.

    Args:
        file_name (str, optional): The file name to log to. If None, no file handler is added.
        loglevel (int, optional): The log level to set. If None, the current level is kept.
    """
    logger = logging.getLogger(LOGGER_NAME)
    logger.propagate = False  # prevent duplicate output
    if loglevel is not None:
        logger.setLevel(loglevel)
    formatter = HYPCMCFormatter()
    new_handlers = []
    if not any(type(h) is logging.StreamHandler for h in logger.handlers):
        new_handlers.append(logging.StreamHandler(sys.stdout))
    if file_name is not None:
        new_handlers.append(logging.FileHandler(file_name, "w", "utf-8"))
    for handler in new_handlers:
        handler.setFormatter(formatter)
        logger.addHandler(handler)


log = logging.getLogger(LOGGER_NAME)
