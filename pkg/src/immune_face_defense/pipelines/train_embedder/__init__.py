"""Toy recognition model training pipeline."""

from .pipeline import create_pipeline  # NOQA
