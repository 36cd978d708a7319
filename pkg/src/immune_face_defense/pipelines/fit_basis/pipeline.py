"""Eigenbasis fitting on the training faces.

Input Datasets:
    - train_faces

Output Datasets:
    - eigenbasis: mean face and the ``d_e`` leading eigenvectors
    - eigenbasis_summary: identifier, dimensions and retained energy ratio
"""

from kedro.pipeline import Node, Pipeline

from .nodes import fit_basis


def create_pipeline(**kwargs) -> Pipeline:
    return Pipeline(
        [
            Node(
                func=fit_basis,
                inputs=["train_faces", "params:eigenbasis"],
                outputs=["eigenbasis", "eigenbasis_summary"],
                name="fit_basis",
            ),
        ]
    )
