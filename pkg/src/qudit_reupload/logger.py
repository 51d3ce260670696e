"""
Console and file logging for qudit_reupload.

All modules share one process-global logger from get_logger(). Messages are
colored per level with colorama; SUCCESS (between INFO and WARNING) marks
finished runs and written artifacts. Sweep workers are separate processes, so
the console level chosen on the command line is reapplied in each worker by
init_worker.
"""

import logging
import sys
from typing import ClassVar, Optional

from colorama import Fore, Style

SUCCESS = 25
CONSOLE_FORMAT = "%(message)s"
FILE_FORMAT = "%(asctime)s %(processName)s %(levelname)s %(message)s"


class ColoredFormatter(logging.Formatter):
    """Wraps the message in the color of its level; INFO stays plain"""

    LEVEL_COLORS: ClassVar[dict] = {
        "DEBUG": Fore.CYAN,
        "SUCCESS": Fore.GREEN,
        "WARNING": Fore.YELLOW,
        "ERROR": Fore.RED,
        "CRITICAL": Fore.RED + Style.BRIGHT,
    }

    def format(self, record):
        color = self.LEVEL_COLORS.get(record.levelname)
        if not color:
            return super().format(record)
        plain = record.msg
        record.msg = f"{color}{plain}{Style.RESET_ALL}"
        try:
            return super().format(record)
        finally:
            # the file handler sees the same record
            record.msg = plain


class QuditToolLogger:
    """
    Package logger with one console handler and an optional file handler.

    The console handler writes to stdout at console_level. The file handler,
    when set, records everything from DEBUG up with timestamps and the name of
    the process, which tells sweep workers apart.
    """

    def __init__(self, name: str = "qudit_reupload", console_level: int = logging.INFO):
        if logging.getLevelName(SUCCESS) != "SUCCESS":
            logging.addLevelName(SUCCESS, "SUCCESS")

        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False
        self.console_level = console_level
        self._console: Optional[logging.Handler] = None
        self._file: Optional[logging.Handler] = None
        self.setup_console_handler(console_level)

    def _replace(self, old: Optional[logging.Handler], new: logging.Handler) -> logging.Handler:
        if old is not None:
            self.logger.removeHandler(old)
            old.close()
        self.logger.addHandler(new)
        return new

    def setup_console_handler(self, level: int = logging.INFO, colorized: bool = True):
        handler = logging.StreamHandler(sys.stdout)
        handler.setLevel(level)
        formatter_class = ColoredFormatter if colorized else logging.Formatter
        handler.setFormatter(formatter_class(CONSOLE_FORMAT))
        self._console = self._replace(self._console, handler)
        self.console_level = level

    def setup_file_handler(self, filepath: str, level: int = logging.DEBUG):
        handler = logging.FileHandler(filepath, mode="w", encoding="utf-8")
        handler.setLevel(level)
        handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt="%H:%M:%S"))
        self._file = self._replace(self._file, handler)

    def close_file_handler(self):
        if self._file is not None:
            self.logger.removeHandler(self._file)
            self._file.close()
            self._file = None

    def set_level(self, level: int):
        self.console_level = level
        if self._console is not None:
            self._console.setLevel(level)

    def debug(self, msg, *args, **kwargs):
        self.logger.debug(msg, *args, **kwargs)

    def info(self, msg, *args, **kwargs):
        self.logger.info(msg, *args, **kwargs)

    def success(self, msg, *args, **kwargs):
        self.logger.log(SUCCESS, msg, *args, **kwargs)

    def warning(self, msg, *args, **kwargs):
        self.logger.warning(msg, *args, **kwargs)

    def error(self, msg, *args, **kwargs):
        self.logger.error(msg, *args, **kwargs)

    def critical(self, msg, *args, **kwargs):
        self.logger.critical(msg, *args, **kwargs)


_global_logger: Optional[QuditToolLogger] = None


def get_logger() -> QuditToolLogger:
    global _global_logger
    if _global_logger is None:
        _global_logger = QuditToolLogger()
    return _global_logger


def console_level(verbose: bool = False, quiet: bool = False) -> int:
    if quiet:
        return logging.ERROR
    if verbose:
        return logging.DEBUG
    return logging.INFO


def setup_logging(verbose: bool = False, quiet: bool = False, log_file: Optional[str] = None):
    """
    Configure the console level from the command-line flags.

    Args:
        verbose: DEBUG output, including per-epoch training progress
        quiet: Errors only
        log_file: Optional path for a full DEBUG log
    """
    logger = get_logger()
    logger.setup_console_handler(console_level(verbose, quiet))
    if log_file:
        logger.setup_file_handler(log_file)


def init_worker(level: int):
    """Pool initializer: match the parent's console level in a sweep worker"""
    get_logger().set_level(level)
