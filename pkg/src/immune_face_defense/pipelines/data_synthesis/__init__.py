"""Toy face corpus generation pipeline."""

from .pipeline import create_pipeline  # NOQA
