"""Ablations of the full experiment.

Each ablation retrains the defense under its own ``ablations.<name>`` run group
and evaluates it on the adversarial sets of the full run. ``embedder_swap``
keeps the full defense and replaces the recognition model with one trained from
``swap_embedder``, regenerating the attacks against it.

Output Datasets:
    - <namespace>.eval_reports, <namespace>.eval_table, ...
    - ablation_summary: directional checks and EERs of every run (JSON)
    - ablation_table: the same as text
"""

from kedro.pipeline import Node, Pipeline, pipeline

from immune_face_defense.pipelines import attack, evaluate, train_defense, train_embedder
from immune_face_defense.pipelines.attack.pipeline import PAIR_ATTACKS

from .nodes import summarise_ablations

ABLATIONS = ("no_ssat", "no_memory", "k20", "k30")
SWAP = "embedder_swap"

ATTACK_PARAMETERS = {f"attacks.{name}": f"attacks.{name}" for name in PAIR_ATTACKS}


def create_ablation_pipeline(name: str) -> Pipeline:
    return pipeline(
        nodes=train_defense.create_pipeline() + evaluate.create_pipeline(include_sticker=False),
        namespace=name,
        inputs={
            "eigenbasis": "eigenbasis",
            "train_faces": "train_faces",
            "embedder": "embedder",
            "pair_protocol": "pair_protocol",
            "holdout_faces": "holdout_faces",
            **{f"adversarial_{kind}": f"adversarial_{kind}" for kind in PAIR_ATTACKS},
        },
        parameters={
            "defense": "defense",
            "trainer": "trainer",
            "run": f"ablations.{name}",
            "evaluation": "evaluation",
        },
    )


def create_swap_pipeline() -> Pipeline:
    return pipeline(
        nodes=train_embedder.create_pipeline()
        + attack.create_pipeline(include_sticker=False)
        + evaluate.create_pipeline(include_sticker=False),
        namespace=SWAP,
        inputs={
            "train_faces": "train_faces",
            "holdout_faces": "holdout_faces",
            "pair_protocol": "pair_protocol",
            "eigenbasis": "eigenbasis",
            "defense_checkpoint": "defense_checkpoint",
        },
        parameters={
            "embedder": "swap_embedder",
            "evaluation": "evaluation",
            **ATTACK_PARAMETERS,
        },
    )


def create_pipeline(**kwargs) -> Pipeline:
    variants = (*ABLATIONS, SWAP)
    summary = Pipeline(
        [
            Node(
                func=summarise_ablations,
                inputs={
                    "full_reports": "eval_reports",
                    **{name: f"{name}.eval_reports" for name in variants},
                },
                outputs=["ablation_summary", "ablation_table"],
                name="summarise_ablations",
            ),
        ]
    )
    ablations = sum((create_ablation_pipeline(name) for name in ABLATIONS), Pipeline([]))
    return ablations + create_swap_pipeline() + summary
