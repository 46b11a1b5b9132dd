import logging
import os

from app.config import DEFAULT_LOG_LEVEL, LOG_ENV_VAR

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def configure_logging(level=None):
    """Set up stderr logging, verbosity taken from GAUDIN_LOG unless given."""
    requested = (level or os.environ.get(LOG_ENV_VAR) or DEFAULT_LOG_LEVEL).upper()
    known = requested in _LEVELS
    logging.basicConfig(
        level=getattr(logging, requested if known else DEFAULT_LOG_LEVEL),
        format=LOG_FORMAT,
        force=True,
    )
    if not known:
        logging.getLogger(__name__).warning(
            "Unknown %s value %r, using %s", LOG_ENV_VAR, requested, DEFAULT_LOG_LEVEL
        )
    return logging.getLogger("app")
