"""Environment-driven defaults.

Every value here can be set in the environment or an ``.env`` file and is
overridden by explicit function arguments.
"""

from decouple import config

CONFIDENCE_LEVEL: float = config("HAZARDKIT_CONFIDENCE_LEVEL", default=0.95, cast=float)
DROPOUT_THRESHOLD: float = config("HAZARDKIT_DROPOUT_THRESHOLD", default=0.20, cast=float)
BOOTSTRAP_REPLICATES: int = config("HAZARDKIT_BOOTSTRAP_REPLICATES", default=500, cast=int)
DEFAULT_SEED: int = config("HAZARDKIT_SEED", default=20240101, cast=int)
LOG_LEVEL: str = config("HAZARDKIT_LOG_LEVEL", default="WARNING")
DATA_URL: str = config(
    "HAZARDKIT_DATA_URL",
    default="https://vincentarelbundock.github.io/Rdatasets/csv/survival",
)
DATA_DIR: str = config("HAZARDKIT_DATA_DIR", default="")

# Rates are reported per this many units of person-time.
RATE_SCALE: float = config("HAZARDKIT_RATE_SCALE", default=1000.0, cast=float)
