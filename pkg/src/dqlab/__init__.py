"""Decoupled Q-learning lab: survival and task value functions learned side by side."""

__version__ = "0.1.0"
