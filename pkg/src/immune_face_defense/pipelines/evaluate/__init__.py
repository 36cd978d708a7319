"""Verification experiments with and without the defense pipeline."""

from .pipeline import create_pipeline  # NOQA
