"""Desk-scale 4D semantic occupancy tokenization, forecasting, and steering."""

__version__ = "0.1.0"
