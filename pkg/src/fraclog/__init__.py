"""Fractional logistic equations with a degenerate absorption term: solvers and limit experiments."""

__version__ = "0.1.0"
