"""Nodes generating the toy face corpus used when no real faces are configured."""

import logging

from immune_face_defense.config import CorpusConfig
from immune_face_defense.ingest import FaceImage, synthesize_corpus

logger = logging.getLogger(__name__)


def synthesize_faces(corpus_params: dict) -> list[FaceImage]:
    """Generate the synthetic corpus described by the ``corpus`` parameters.

    Args:
        corpus_params: ``corpus`` parameter group; ``synthetic`` holds the generator
            settings and ``image_size`` the raster size

    Returns:
        list of FaceImage ordered by identity, then image index
    """
    cfg = CorpusConfig.model_validate(corpus_params)
    if cfg.root is not None:
        logger.warning("corpus.root is set to %s; the synthetic corpus will overwrite it", cfg.root)
    synthetic = cfg.synthetic
    return synthesize_corpus(
        synthetic.n_identities,
        synthetic.images_per_identity,
        cfg.shape,
        seed=synthetic.seed,
        identity_amplitude=synthetic.identity_amplitude,
        max_shift=synthetic.max_shift,
        brightness_jitter=synthetic.brightness_jitter,
        noise_std=synthetic.noise_std,
    )
