"""Intrusion detection toolkit for radiation detection systems."""

__version__ = "0.1.0"
