import logging
import os
import sys

from pythonjsonlogger import jsonlogger

LOG_ENV = "WPT_ISAC_LOG"
DEFAULT_LEVEL = "WARNING"
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def configure_logging(level=None, stream=None) -> logging.Logger:
    """JSON-lines logging for the ``wpIsac`` package on standard error.

    ``level`` defaults to the ``WPT_ISAC_LOG`` environment variable, then to
    WARNING. Calling it again replaces the previous handler.
    """
    requested = level if level is not None else os.environ.get(LOG_ENV, DEFAULT_LEVEL)
    name = str(requested).strip().upper()
    unknown = name not in LEVELS

    root = logging.getLogger("wpIsac")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(stream if stream is not None else sys.stderr)
    handler.setFormatter(jsonlogger.JsonFormatter(_FORMAT))
    root.addHandler(handler)
    root.setLevel(DEFAULT_LEVEL if unknown else name)
    root.propagate = False

    if unknown:
        root.warning("Unknown log level, using " + DEFAULT_LEVEL, extra={"requested": str(requested)})
    return root
