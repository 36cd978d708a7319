"""Kedro datasets for face corpora, pair protocols and float32 containers."""

from .float32_container_dataset import (
    AdversarialSetDataset,
    DefenseCheckpointDataset,
    EigenBasisDataset,
    EmbedderDataset,
    Float32ContainerDataset,
)
from .face_corpus_dataset import FaceCorpusDataset
from .pair_protocol_dataset import PairProtocolDataset

__all__ = [
    "AdversarialSetDataset",
    "DefenseCheckpointDataset",
    "EigenBasisDataset",
    "EmbedderDataset",
    "FaceCorpusDataset",
    "Float32ContainerDataset",
    "PairProtocolDataset",
]
