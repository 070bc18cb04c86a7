"""Reasoning-based implicit semantic data augmentation for long-tailed classification."""

__version__ = "0.1.0"
