"""Antibody dynamics and the acceptance summary pipeline."""

from .pipeline import create_pipeline  # NOQA
