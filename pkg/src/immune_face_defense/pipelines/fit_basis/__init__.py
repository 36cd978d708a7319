"""Eigenbasis fitting pipeline."""

from .pipeline import create_pipeline  # NOQA
