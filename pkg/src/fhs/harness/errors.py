"""Exceptions mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid settings or flags (exit code 2)."""


class DataError(ValueError):
    """Unreadable or invalid input data (exit code 3)."""
