"""Composite and predicted signed-distance fields for planning among moving obstacles."""

__version__ = "0.1.0"
