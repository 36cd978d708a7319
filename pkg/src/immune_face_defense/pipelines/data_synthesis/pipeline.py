"""Toy face corpus generation.

Output Datasets:
    - face_corpus: ``<identity>/<image>.png`` directory read by every other pipeline
"""

from kedro.pipeline import Node, Pipeline

from .nodes import synthesize_faces


def create_pipeline(**kwargs) -> Pipeline:
    return Pipeline(
        [
            Node(
                func=synthesize_faces,
                inputs="params:corpus",
                outputs="face_corpus",
                name="synthesize_faces",
            ),
        ]
    )
