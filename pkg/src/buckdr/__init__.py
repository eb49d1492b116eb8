"""Voltage-mode buck converter design and verification toolkit."""

__version__ = "0.1.0"
