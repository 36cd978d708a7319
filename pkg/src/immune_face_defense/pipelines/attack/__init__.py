"""Adversarial set generation pipeline."""

from .pipeline import create_pipeline  # NOQA
