import logging

import numpy as np
import pytest
import torch

from immune_face_defense.eigen import (
    Antibody,
    apply_antibody,
    basis_from_arrays,
    basis_to_arrays,
    clamp_to_unit,
    fit_eigenbasis,
    full_projection,
    project,
    reconstruct,
    weighted_projection,
)
from immune_face_defense.ingest import stack_pixels, synthesize_corpus


@pytest.fixture(scope="module")
def spanning_basis(train_faces):
    """Basis spanning the whole centred training set (rank N - 1)."""
    return fit_eigenbasis(train_faces, len(train_faces) - 1)


def _dense_oracle(stack: np.ndarray, d_e: int) -> tuple[np.ndarray, np.ndarray]:
    flat = stack.reshape(stack.shape[0], -1)
    centred = flat - flat.mean(axis=0)
    values, vectors = np.linalg.eigh(centred.T @ centred / flat.shape[0])
    order = np.argsort(-values)[:d_e]
    return values[order], vectors[:, order]


def _assert_matches_oracle(basis, stack: np.ndarray) -> None:
    values, vectors = _dense_oracle(stack, basis.d_e)
    np.testing.assert_allclose(basis.eigenvalues.numpy(), values, rtol=1e-7, atol=1e-12)
    fitted = basis.vectors.numpy()
    gaps = np.abs(np.diff(values))
    for index in range(basis.d_e):
        neighbours = [gaps[index - 1]] if index else []
        if index < basis.d_e - 1:
            neighbours.append(gaps[index])
        if min(neighbours) <= 1e-6 * values[0]:
            continue
        overlap = min(abs(float(fitted[:, index] @ vectors[:, index])), 1.0)
        assert np.arccos(overlap) < 1e-4, f"component {index}"


class TestFitEigenbasis:
    def test_shapes(self, basis):
        assert basis.d == 256
        assert basis.d_e == 16
        assert basis.image_shape == (16, 16)
        assert basis.vectors.dtype == torch.float64

    def test_orthonormal(self, basis):
        assert basis.orthonormality_error() < 1e-6

    def test_eigenvalues_descending(self, basis):
        values = basis.eigenvalues.numpy()
        assert np.all(np.diff(values) <= 0)
        assert values.min() >= 0

    def test_sign_normalised(self, basis):
        vectors = basis.vectors.numpy()
        pivots = np.abs(vectors).argmax(axis=0)
        assert np.all(vectors[pivots, np.arange(basis.d_e)] > 0)

    def test_energy_ratio(self, basis, spanning_basis):
        assert 0 < basis.energy_ratio(4) < basis.energy_ratio() <= 1
        assert spanning_basis.energy_ratio() == pytest.approx(1.0)
        with pytest.raises(ValueError):
            basis.energy_ratio(basis.d_e + 1)

    def test_deterministic_identifier(self, train_faces, basis):
        assert fit_eigenbasis(train_faces, 16).identifier == basis.identifier

    def test_gram_path_matches_dense_oracle(self, train_faces, basis):
        _assert_matches_oracle(basis, stack_pixels(train_faces))

    def test_covariance_path_matches_dense_oracle(self):
        corpus = synthesize_corpus(10, 10, (8, 8), seed=2)
        stack = stack_pixels(corpus)
        basis = fit_eigenbasis(stack, 12)
        assert basis.orthonormality_error() < 1e-10
        _assert_matches_oracle(basis, stack)

    @pytest.mark.slow
    def test_toy_corpus_at_64_pixels_matches_dense_oracle(self):
        corpus = synthesize_corpus(8, 8, (64, 64), seed=0)
        stack = stack_pixels(corpus)
        basis = fit_eigenbasis(stack, 32)
        assert basis.orthonormality_error() < 1e-6
        _assert_matches_oracle(basis, stack)

    def test_completes_rank_deficient_corpus(self, faces, caplog):
        # 5 images centre to rank 4
        with caplog.at_level(logging.WARNING):
            basis = fit_eigenbasis(faces[:5], 5)
        assert "completing with zero-variance directions" in caplog.text
        assert float(basis.eigenvalues[-1]) == 0.0
        assert basis.orthonormality_error() < 1e-10

    def test_rejects_excess_d_e(self, train_faces):
        with pytest.raises(ValueError, match="achievable rank 24"):
            fit_eigenbasis(train_faces, 25)

    def test_rejects_single_image(self, faces):
        with pytest.raises(ValueError, match="at least 2 images"):
            fit_eigenbasis(faces[:1], 1)


class TestProjection:
    def test_full_antibody_restores_training_faces(self, train_faces, spanning_basis):
        face = torch.from_numpy(train_faces[3].pixels)
        restored = apply_antibody(face, Antibody.full(spanning_basis.d_e), spanning_basis)
        torch.testing.assert_close(restored, face, atol=1e-8, rtol=0)

    def test_empty_antibody_gives_mean_face(self, basis, clean_image):
        restored = apply_antibody(clean_image, Antibody.empty(basis.d_e), basis)
        torch.testing.assert_close(restored.flatten(), basis.mean)

    def test_project_then_reconstruct(self, basis, clean_image):
        subset = [0, 2, 5]
        alpha = project(clean_image, basis, subset)
        assert alpha.shape == (3,)
        expected = apply_antibody(clean_image, Antibody.from_indices(subset, basis.d_e), basis)
        torch.testing.assert_close(reconstruct(alpha, basis, subset), expected)

    def test_projection_is_idempotent(self, basis, clean_image):
        antibody = Antibody.from_indices([1, 3, 4, 9], basis.d_e)
        once = apply_antibody(clean_image, antibody, basis)
        torch.testing.assert_close(apply_antibody(once, antibody, basis), once)

    def test_weighted_projection_with_mask(self, basis, clean_image):
        antibody = Antibody.from_indices([0, 1, 7], basis.d_e)
        weighted = weighted_projection(
            clean_image, basis.mean, basis.vectors, antibody.as_tensor()
        )
        torch.testing.assert_close(weighted, apply_antibody(clean_image, antibody, basis))

    def test_full_projection_keeps_float32(self, basis, clean_image):
        result = full_projection(clean_image.to(torch.float32).unsqueeze(0), basis)
        assert result.dtype == torch.float32
        assert result.shape == (1, 16, 16)

    def test_index_out_of_range(self, basis, clean_image):
        with pytest.raises(ValueError, match="out of range"):
            project(clean_image, basis, [basis.d_e])

    def test_antibody_bound_to_other_basis(self, basis, clean_image):
        with pytest.raises(ValueError, match="d_e"):
            apply_antibody(clean_image, Antibody.full(basis.d_e + 1), basis)

    def test_wrong_pixel_count(self, basis):
        with pytest.raises(ValueError, match="pixels"):
            project(torch.zeros(8, 8), basis, [0])

    def test_coefficient_count_mismatch(self, basis):
        with pytest.raises(ValueError, match="coefficients"):
            reconstruct(torch.zeros(2, dtype=torch.float64), basis, [0, 1, 2])


class TestPersistence:
    def test_arrays_keep_identifier_and_orthonormality(self, basis):
        arrays, metadata = basis_to_arrays(basis)
        float32_arrays = {name: array.astype(np.float32) for name, array in arrays.items()}
        restored = basis_from_arrays(float32_arrays, metadata)
        assert restored.identifier == basis.identifier
        assert restored.image_shape == basis.image_shape
        assert restored.orthonormality_error() < 1e-12
        torch.testing.assert_close(restored.vectors, basis.vectors, atol=1e-6, rtol=0)


def test_clamp_to_unit():
    inside, changed = clamp_to_unit(np.array([[0.0, 0.5]]))
    assert not changed
    clamped, changed = clamp_to_unit(torch.tensor([[-0.1, 1.2]]))
    assert changed
    np.testing.assert_array_equal(clamped, [[0.0, 1.0]])
