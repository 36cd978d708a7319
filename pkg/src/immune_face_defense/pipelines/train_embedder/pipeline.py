"""Toy recognition model the defense protects.

Input Datasets:
    - train_faces, holdout_faces, pair_protocol

Output Datasets:
    - embedder: frozen embedding network, parameter hash checked on load
    - embedder_summary: clean EER on the pair protocol
"""

from kedro.pipeline import Node, Pipeline

from .nodes import train_embedder


def create_pipeline(**kwargs) -> Pipeline:
    return Pipeline(
        [
            Node(
                func=train_embedder,
                inputs=["train_faces", "holdout_faces", "pair_protocol", "params:embedder"],
                outputs=["embedder", "embedder_summary"],
                name="train_embedder",
            ),
        ]
    )
