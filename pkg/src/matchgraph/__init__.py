"""Approximate matching-graph discovery with encoded-vector priors."""

__version__ = "0.1.0"
