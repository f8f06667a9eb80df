"""Inductive graph transformer for origin-destination delivery-time estimation."""

__version__ = "0.1.0"
