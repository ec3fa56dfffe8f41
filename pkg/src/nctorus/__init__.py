"""Exponential calculus on noncommutative two-tori with complex structure."""

__version__ = "0.1.0"
