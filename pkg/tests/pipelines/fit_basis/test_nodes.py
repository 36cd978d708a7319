import pytest

from immune_face_defense.pipelines.fit_basis.nodes import fit_basis


def test_fit_basis(train_faces):
    basis, summary = fit_basis(train_faces, {"d_e": 8})
    assert basis.d_e == 8
    assert summary["d"] == 256
    assert summary["n_images"] == len(train_faces)
    assert summary["identifier"] == basis.identifier
    assert summary["orthonormality_error"] < 1e-6
    assert 0.0 < summary["energy_ratio"] <= 1.0


def test_rejects_unknown_parameter(train_faces):
    with pytest.raises(ValueError):
        fit_basis(train_faces, {"d_e": 8, "whiten": True})
