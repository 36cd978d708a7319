"""Clonal selection training of the defense.

Input Datasets:
    - eigenbasis, train_faces, embedder

Output Datasets:
    - defense_checkpoint: analyzer, head and memory bank bound to the eigenbasis
    - training_log: one row per step (affinity, |a|, P_mutation, V, siamese loss)

The ``run`` parameter group names the run and carries its overrides; the
ablation study re-wires this pipeline with the ``ablations.*`` groups instead.
"""

from kedro.pipeline import Node, Pipeline

from .nodes import train_defense


def create_pipeline(**kwargs) -> Pipeline:
    return Pipeline(
        [
            Node(
                func=train_defense,
                inputs=[
                    "eigenbasis",
                    "train_faces",
                    "embedder",
                    "params:defense",
                    "params:trainer",
                    "params:run",
                ],
                outputs=["defense_checkpoint", "training_log"],
                name="train_defense",
            ),
        ]
    )
