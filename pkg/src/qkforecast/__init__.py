"""Hybrid renewable forecasting with a quantum-inspired residual kernel."""

__version__ = "0.1.0"
