"""ruin-pide - Finite-horizon ruin problems with risky investments."""

__version__ = "0.1.0"

# Bumped whenever the JSON run-config layout changes.
CONFIG_SCHEMA_VERSION = "1"
