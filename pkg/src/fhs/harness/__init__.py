"""Data generation, experiment orchestration, real-data workflow and CLI."""

from .errors import ConfigError, DataError
from .metrics import MetricsReport, empirical_mse

__all__ = ["ConfigError", "DataError", "MetricsReport", "empirical_mse"]
