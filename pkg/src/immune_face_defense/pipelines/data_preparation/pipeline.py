"""Train/hold-out split and pair protocol, shared by the pipelines that need them.

Input Datasets:
    - face_corpus

Output Datasets:
    - train_faces, holdout_faces: in-memory corpus parts
    - pair_protocol: ``id1 id2 {0|1}`` pairs over the hold-out faces
"""

from kedro.pipeline import Node, Pipeline

from .nodes import make_pair_protocol, split_faces


def create_pipeline(**kwargs) -> Pipeline:
    return Pipeline(
        [
            Node(
                func=split_faces,
                inputs=["face_corpus", "params:corpus"],
                outputs=["train_faces", "holdout_faces"],
                name="split_faces",
            ),
            Node(
                func=make_pair_protocol,
                inputs=["holdout_faces", "params:protocol"],
                outputs="pair_protocol",
                name="make_pair_protocol",
            ),
        ]
    )
