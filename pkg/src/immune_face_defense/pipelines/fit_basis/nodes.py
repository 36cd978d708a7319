"""Nodes fitting the eigenbasis the antibodies draw from."""

import logging

from immune_face_defense.config import BasisConfig
from immune_face_defense.eigen import EigenBasis, fit_eigenbasis
from immune_face_defense.ingest import FaceImage

logger = logging.getLogger(__name__)


def fit_basis(train_faces: list[FaceImage], eigenbasis_params: dict) -> tuple[EigenBasis, dict]:
    """Fit ``d_e`` principal components on the training faces.

    Returns:
        tuple of (EigenBasis, summary with identifier, dimensions, retained energy
        and orthonormality error)
    """
    cfg = BasisConfig.model_validate(eigenbasis_params)
    basis = fit_eigenbasis(train_faces, cfg.d_e)
    error = basis.orthonormality_error()
    if error > 1e-6:
        logger.warning("Eigenbasis orthonormality error %.3g exceeds 1e-6", error)
    summary = {
        "identifier": basis.identifier,
        "image_shape": list(basis.image_shape),
        "d": basis.d,
        "d_e": basis.d_e,
        "n_images": len(train_faces),
        "covariance": basis.covariance,
        "energy_ratio": basis.energy_ratio(),
        "orthonormality_error": error,
    }
    return basis, summary
