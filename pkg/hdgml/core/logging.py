from loguru import logger
import sys
from pathlib import Path
from typing import Optional, Union

from hdgml.core.config import settings


def setup_logging(log_file: Optional[Union[str, Path]] = None, level: Optional[str] = None):
    """Configure logging for the solver and the experiment runner"""

    # Remove default handler
    logger.remove()

    # Console logging
    logger.add(
        sys.stderr,
        level=level or settings.LOG_LEVEL,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
        colorize=True,
    )

    # File logging (run directory or configured path)
    target = log_file or settings.LOG_FILE
    if target:
        Path(target).parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            str(target),
            rotation="10 MB",
            retention="10 days",
            level="DEBUG",
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
        )

    logger.debug("Logging configured successfully")
