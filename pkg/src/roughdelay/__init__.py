"""Delay equations driven by rough signals with level-2 data."""

__version__ = "0.1.0"
