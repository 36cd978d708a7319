"""Clonal selection training of the defense pipeline."""

from .pipeline import create_pipeline  # NOQA
