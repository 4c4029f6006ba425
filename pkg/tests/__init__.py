"""ruin-pide test suite."""
