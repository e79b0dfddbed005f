import logging
from logging.handlers import RotatingFileHandler
from typing import Optional

from colorama import Fore, Style, init as colorama_init

from utils.config_loader import get_config

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

LEVEL_COLORS = {
    "DEBUG": Fore.CYAN,
    "INFO": Fore.GREEN,
    "WARNING": Fore.YELLOW,
    "ERROR": Fore.RED,
    "CRITICAL": Fore.RED + Style.BRIGHT,
}


class ColoredFormatter(logging.Formatter):
    """Formatter that colors the level name for terminal output."""

    def format(self, record):
        color = LEVEL_COLORS.get(record.levelname)
        if not color:
            return super().format(record)
        original = record.levelname
        record.levelname = f"{color}{original}{Style.RESET_ALL}"
        try:
            return super().format(record)
        finally:
            record.levelname = original


def setup_logger(log_file: Optional[str] = None, level: Optional[str] = None,
                 console: Optional[bool] = None, colored: Optional[bool] = None,
                 max_size: Optional[int] = None, backup_count: Optional[int] = None):
    """Set up logging for the phi logger hierarchy.

    Unset arguments fall back to the ``logging`` section of the configuration.

    Args:
        log_file (str): Path to the log file (default: 'phi.log'); empty disables file logging
        level (str): Log level name
        console (bool): Also log to stderr
        colored (bool): Color level names on the console
        max_size (int): Rotation size in bytes
        backup_count (int): Number of rotated files kept

    Returns:
        logging.Logger: Configured logger instance
    """
    settings = get_config().section("logging")
    log_file = settings.get("file", "phi.log") if log_file is None else log_file
    level = level or settings.get("level", "INFO")
    console = settings.get("console_output", True) if console is None else console
    colored = settings.get("colored_output", True) if colored is None else colored
    max_size = max_size or settings.get("max_size", 10485760)
    backup_count = settings.get("backup_count", 5) if backup_count is None else backup_count

    logger = logging.getLogger("phi")
    logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    logger.propagate = False

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    if log_file:
        file_handler = RotatingFileHandler(log_file, maxBytes=max_size, backupCount=backup_count, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)

    if console:
        colorama_init()
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(ColoredFormatter(LOG_FORMAT) if colored else logging.Formatter(LOG_FORMAT))
        logger.addHandler(console_handler)

    return logger
