"""Verification metrics, attacked-protocol experiments and antibody analytics."""

from .acceptance import acceptance_summary
from .analytics import (
    ANALYTICS_COLUMNS,
    analytics_table,
    antibody_trends,
    phase_windows,
    plot_antibody_dynamics,
)
from .metrics import ScoreSet, compute_eer, far_frr_curve, roc_auc
from .verification import (
    EvalReport,
    EvaluationConfig,
    render_table,
    run_verification,
    sticker_accuracy,
)

__all__ = [
    "ANALYTICS_COLUMNS",
    "EvalReport",
    "EvaluationConfig",
    "ScoreSet",
    "acceptance_summary",
    "analytics_table",
    "antibody_trends",
    "compute_eer",
    "far_frr_curve",
    "phase_windows",
    "plot_antibody_dynamics",
    "render_table",
    "roc_auc",
    "run_verification",
    "sticker_accuracy",
]
