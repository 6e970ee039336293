"""Generative counterfactual engine for institutional-regime panels."""

__version__ = "0.1.0"
