"""Tabular T2DM risk models and SynthA1c encoders with out-of-domain diagnostics."""

__version__ = "0.1.0"
