"""Parallel boosting with bagged weak-learner calls, its diagnostics and a lower-bound simulator."""

__version__ = "0.1.0"
