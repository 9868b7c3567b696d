"""Fusion-frame POD-DeepONet for operator learning and transfer across PDE scenarios."""

__version__ = "0.1.0"
