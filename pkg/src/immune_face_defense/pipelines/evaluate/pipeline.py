"""Verification experiments with and without the defense.

Output Datasets:
    - eval_reports: EvalReport per experiment (JSON)
    - eer_curves: FAR/FRR curves of every experiment (CSV)
    - eval_table: EER table in percent (text)
    - sticker_report: sticker impersonation accuracies (JSON)
"""

from kedro.pipeline import Node, Pipeline

from .nodes import evaluate_defense, evaluate_sticker


def create_pipeline(include_sticker: bool = True, **kwargs) -> Pipeline:
    nodes = [
        Node(
            func=evaluate_defense,
            inputs=[
                "defense_checkpoint",
                "eigenbasis",
                "embedder",
                "pair_protocol",
                "holdout_faces",
                "adversarial_fgsm",
                "adversarial_pgd",
                "adversarial_adaptive_pgd",
                "params:evaluation",
            ],
            outputs=["eval_reports", "eer_curves", "eval_table"],
            name="evaluate_defense",
        ),
    ]
    if include_sticker:
        nodes.append(
            Node(
                func=evaluate_sticker,
                inputs=[
                    "defense_checkpoint",
                    "eigenbasis",
                    "embedder",
                    "sticker_attack",
                    "params:evaluation",
                ],
                outputs="sticker_report",
                name="evaluate_sticker",
            )
        )
    return Pipeline(nodes)
