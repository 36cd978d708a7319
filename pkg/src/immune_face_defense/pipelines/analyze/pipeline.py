"""Antibody dynamics and the acceptance summary.

Input Datasets:
    - training_log, eval_reports, sticker_report

Output Datasets:
    - antibody_analytics: per-step |a|, P_mutation and V (CSV)
    - antibody_trends: windowed trend checks (JSON)
    - antibody_dynamics_plot: three-panel figure (PNG)
    - acceptance_summary: directional checks of the whole experiment (JSON)
"""

from kedro.pipeline import Node, Pipeline

from .nodes import analyze_antibodies, summarise_acceptance


def create_pipeline(**kwargs) -> Pipeline:
    return Pipeline(
        [
            Node(
                func=analyze_antibodies,
                inputs=["training_log", "params:trainer", "params:analytics"],
                outputs=["antibody_analytics", "antibody_trends", "antibody_dynamics_plot"],
                name="analyze_antibodies",
            ),
            Node(
                func=summarise_acceptance,
                inputs=["eval_reports", "antibody_trends", "sticker_report"],
                outputs="acceptance_summary",
                name="summarise_acceptance",
            ),
        ]
    )
