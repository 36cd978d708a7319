"""Networks, memory and the composed defense model."""

from .defense import (
    DefenseConfig,
    DefenseState,
    SiameseState,
    build_defense,
    defend,
    defend_batch,
    make_siamese,
    siamese_update,
)
from .memory import MemoryBank, memory_read, memory_similarities, memory_update
from .neuralcore import (
    PROBABILITY_CLIP,
    SHIPPED_ARCHITECTURES,
    AnalyzerNet,
    ImageNet,
    SelectionHead,
    analyzer_forward,
    build_network,
    clip_probabilities,
    grad_input,
    grad_params,
    infer_output_shape,
    resolve_architecture,
    selection_forward,
)

__all__ = [
    "PROBABILITY_CLIP",
    "SHIPPED_ARCHITECTURES",
    "AnalyzerNet",
    "DefenseConfig",
    "DefenseState",
    "ImageNet",
    "MemoryBank",
    "SelectionHead",
    "SiameseState",
    "analyzer_forward",
    "build_defense",
    "build_network",
    "clip_probabilities",
    "defend",
    "defend_batch",
    "grad_input",
    "grad_params",
    "infer_output_shape",
    "make_siamese",
    "memory_read",
    "memory_similarities",
    "memory_update",
    "resolve_architecture",
    "selection_forward",
    "siamese_update",
]
