"""Functional horseshoe shrinkage for spline and Gaussian-process regression."""

__version__ = "0.1.0"
