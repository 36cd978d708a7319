"""Adversarial set generation.

Every set is generated once against the recognition model and then evaluated
with and without the defense. Adaptive attacks optimise through the full
eigenbasis projector.

Input Datasets:
    - pair_protocol, holdout_faces, embedder, eigenbasis (and face_corpus for the sticker)

Output Datasets:
    - adversarial_<attack>: one AdversarialSet per entry of ``PAIR_ATTACKS``
    - sticker_attack: patch, gallery and patched gallery
"""

from kedro.pipeline import Node, Pipeline

from .nodes import generate_attack_set, run_sticker_attack

PAIR_ATTACKS = ("fgsm", "pgd", "adaptive_pgd")


def create_pipeline(include_sticker: bool = True, **kwargs) -> Pipeline:
    nodes = [
        Node(
            func=generate_attack_set,
            inputs=[
                "pair_protocol",
                "holdout_faces",
                "embedder",
                "eigenbasis",
                f"params:attacks.{name}",
            ],
            outputs=f"adversarial_{name}",
            name=f"generate_{name}_set",
        )
        for name in PAIR_ATTACKS
    ]
    if include_sticker:
        nodes.append(
            Node(
                func=run_sticker_attack,
                inputs=["face_corpus", "embedder", "params:attacks.sticker", "params:evaluation"],
                outputs="sticker_attack",
                name="run_sticker_attack",
            )
        )
    return Pipeline(nodes)
