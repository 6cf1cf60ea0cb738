"""Bayesian nonparametric segmentation of network RTT time series."""

__version__ = "0.1.0"
