import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

# Default roots for datasets and training runs
DATA_DIR = Path(os.environ.get("SEESAW_DATA_DIR", BASE_DIR / "data"))
RUNS_DIR = Path(os.environ.get("SEESAW_RUNS_DIR", BASE_DIR / "runs"))

# --------------------------------------------------------------------
# Security settings
# --------------------------------------------------------------------

# Nothing is served; Django only wants the key to exist.
SECRET_KEY = os.environ.get("SECRET_KEY", "seesaw-local-only")
DEBUG = os.environ.get("DEBUG", "NO") == "YES"
VERBOSE = os.environ.get("VERBOSE", "NO") == "YES"

ALLOWED_HOSTS: list[str] = []

# --------------------------------------------------------------------
# Application config
# --------------------------------------------------------------------

INSTALLED_APPS = [
    "seesaw.nn",
    "seesaw.training",
    "seesaw.cli",
]

# No models anywhere, so no database either.
DATABASES: dict = {}

# --------------------------------------------------------------------
# Compute config
# --------------------------------------------------------------------

# Cap on the worker threads that prepare training batches.
SEESAW_THREADS = int(os.environ.get("SEESAW_THREADS") or os.cpu_count() or 1)

# Long acceptance runs (real CIFAR, hundreds of steps) only run when asked.
SLOW_TESTS = os.environ.get("SEESAW_SLOW_TESTS", "NO") == "YES"
CIFAR_DIR = os.environ.get("SEESAW_CIFAR_DIR")

# --------------------------------------------------------------------
# Logging config
# --------------------------------------------------------------------

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "compact": {"format": "%(levelname).1s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "compact",
        },
    },
    "loggers": {
        "seesaw": {
            "handlers": ["console"],
            "level": "DEBUG" if VERBOSE else "INFO",
            "propagate": False,
        },
    },
}
