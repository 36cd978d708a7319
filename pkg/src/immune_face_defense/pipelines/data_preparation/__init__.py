"""Train/hold-out split and the verification pair protocol pipeline."""

from .pipeline import create_pipeline  # NOQA
