"""Probabilistic wind/solar forecasting and day-ahead trading toolkit."""

from hybridcast.levels import DENSE_LEVELS, DESK_LEVELS, TARGET_LEVELS

__version__ = "0.1.0"

__all__ = ["DENSE_LEVELS", "DESK_LEVELS", "TARGET_LEVELS", "__version__"]
