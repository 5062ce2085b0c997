"""Batch analytics for news attention, sentiment and intraday market series."""

__version__ = "0.1.0"
