import pytest

from immune_face_defense.errors import CorpusError
from immune_face_defense.pipelines.data_preparation.nodes import make_pair_protocol, split_faces


def test_split_faces(faces):
    train, holdout = split_faces(faces, {"holdout_per_identity": 2, "split_seed": 0})
    assert len(train) == 24
    assert len(holdout) == 12
    assert not {face.image_id for face in train} & {face.image_id for face in holdout}


def test_make_pair_protocol(holdout_faces):
    protocol = make_pair_protocol(
        holdout_faces, {"n_pos": 4, "n_neg": 5, "perturbed_side": "second"}
    )
    assert protocol.perturbed_side == "second"
    assert int(protocol.pairs["IS_POSITIVE"].sum()) == 4
    assert len(protocol.pairs) == 9


def test_protocol_needs_same_identity_pairs(holdout_faces):
    singles = list({face.identity_label: face for face in holdout_faces}.values())
    with pytest.raises(CorpusError):
        make_pair_protocol(singles, {"n_pos": 1, "n_neg": 1})
