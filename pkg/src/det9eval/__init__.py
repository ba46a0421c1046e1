"""Evaluation toolkit for monocular 9-DoF vehicle detection."""

__version__ = "0.1.0"
