"""Computational toolkit for finite boundary-marked metric spaces."""

__version__ = "0.1.0"
