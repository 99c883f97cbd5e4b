"""Clustered personalized federated learning driven by lazy influence scores."""

__version__ = "0.1.0"
