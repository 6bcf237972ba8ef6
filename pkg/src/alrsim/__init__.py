"""Finite-element harness for cloaking via anomalous localized resonance."""

__version__ = "0.1.0"
