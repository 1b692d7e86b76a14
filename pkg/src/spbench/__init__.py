"""Stability/plasticity benchmark for recommender models."""

__version__ = "0.1.0"
