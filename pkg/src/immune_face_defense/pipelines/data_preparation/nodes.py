"""Nodes splitting the corpus and drawing the verification protocol.

The split is seeded, so every pipeline that needs the training or hold-out part
recomputes the same split from ``face_corpus``.
"""

from immune_face_defense.config import CorpusConfig, ProtocolConfig
from immune_face_defense.ingest import FaceImage, PairProtocol, build_pairs, split_corpus, validate_protocol


def split_faces(
    face_corpus: list[FaceImage], corpus_params: dict
) -> tuple[list[FaceImage], list[FaceImage]]:
    """Hold out ``holdout_per_identity`` images of every identity.

    Returns:
        tuple of (training faces, held-out faces)
    """
    cfg = CorpusConfig.model_validate(corpus_params)
    return split_corpus(face_corpus, cfg.holdout_per_identity, seed=cfg.split_seed)


def make_pair_protocol(holdout_faces: list[FaceImage], protocol_params: dict) -> PairProtocol:
    """Positive and negative pairs drawn from the held-out faces only."""
    cfg = ProtocolConfig.model_validate(protocol_params)
    protocol = build_pairs(
        holdout_faces, cfg.n_pos, cfg.n_neg, seed=cfg.seed, perturbed_side=cfg.perturbed_side
    )
    validate_protocol(protocol, holdout_faces)
    return protocol
