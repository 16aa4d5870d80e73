"""Micro-to-macro traffic heterogeneity toolkit.

Simulates and ingests vehicle trajectories, extracts driver attributes,
reconstructs macroscopic fields including a continuous heterogeneity
attribute, calibrates constrained fundamental diagrams, and integrates
the resulting second-order flow model with conservation diagnostics.
"""

__version__ = "0.1.0"
