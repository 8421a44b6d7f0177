"""Exact reproduction lab for accuracy phase transitions in learned inverse-problem solvers."""

__version__ = "0.1.0"
