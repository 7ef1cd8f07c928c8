"""Causal discovery, graph comparison and complexity features for short multivariate time series."""

__version__ = "0.1.0"
