"""Fraud reviewer group detection from spatio-temporal co-review structure."""

__version__ = "0.1.0"
