import os
import sys
from typing import Optional

from loguru import logger
from tqdm import tqdm

LOG_LEVEL_ENV = "HYPERTEA_LOG_LEVEL"
_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {name}:{line} - {message}"


def configure_logging(level: Optional[str] = None) -> str:
    """Replace loguru's default sink with one that cooperates with tqdm bars."""
    level = (level or os.environ.get(LOG_LEVEL_ENV) or "INFO").upper()
    logger.remove()
    logger.add(
        lambda message: tqdm.write(message, end="", file=sys.stderr),
        level=level,
        format=_FORMAT,
        colorize=sys.stderr.isatty(),
    )
    return level
