"""
Face corpus ingestion: loading, synthesis, splitting and pair protocols.
"""

from .face_corpus import (
    PAIR_COLUMNS,
    FaceImage,
    PairProtocol,
    build_pairs,
    corpus_lookup,
    load_corpus,
    read_face_image,
    save_corpus,
    split_corpus,
    stack_pixels,
    synthesize_corpus,
    to_grayscale,
    validate_protocol,
)

__all__ = [
    "PAIR_COLUMNS",
    "FaceImage",
    "PairProtocol",
    "build_pairs",
    "corpus_lookup",
    "load_corpus",
    "read_face_image",
    "save_corpus",
    "split_corpus",
    "stack_pixels",
    "synthesize_corpus",
    "to_grayscale",
    "validate_protocol",
]
