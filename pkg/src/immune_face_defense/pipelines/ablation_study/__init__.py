"""Ablation runs and the recognition model swap as namespaced pipeline variants."""

from .pipeline import create_pipeline  # NOQA
