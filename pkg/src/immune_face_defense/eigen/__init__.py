"""Eigenbasis fitting and the antibodies drawn from it."""

from .antibody import (
    AffinityConfig,
    Antibody,
    affinity,
    affinity_scores,
    apply_antibody,
    mutation_probability,
    sparsity,
    specificity_J,
    specificity_matrix,
    specificity_V,
)
from .eigenbasis import (
    EigenBasis,
    basis_from_arrays,
    basis_identifier,
    basis_to_arrays,
    clamp_to_unit,
    fit_eigenbasis,
    flatten_images,
    full_projection,
    project,
    reconstruct,
    weighted_projection,
)

__all__ = [
    "AffinityConfig",
    "Antibody",
    "EigenBasis",
    "affinity",
    "affinity_scores",
    "apply_antibody",
    "basis_from_arrays",
    "basis_identifier",
    "basis_to_arrays",
    "clamp_to_unit",
    "fit_eigenbasis",
    "flatten_images",
    "full_projection",
    "mutation_probability",
    "project",
    "reconstruct",
    "sparsity",
    "specificity_J",
    "specificity_V",
    "specificity_matrix",
    "weighted_projection",
]
