"""Nodes turning the training log and the reports into analytics."""

import matplotlib.pyplot as plt
import pandas as pd

from immune_face_defense.config import AnalyticsConfig, TrainerConfig
from immune_face_defense.evaluation import (
    acceptance_summary,
    analytics_table,
    antibody_trends,
    plot_antibody_dynamics,
)


def analyze_antibodies(
    training_log: pd.DataFrame, trainer_params: dict, analytics_params: dict
) -> tuple[pd.DataFrame, dict, plt.Figure]:
    """Per-step sparsity, mutation probability and specificity plus their trends.

    Returns:
        tuple of (analytics table, trend checks, three-panel figure)
    """
    trainer = TrainerConfig.model_validate(trainer_params)
    window = AnalyticsConfig.model_validate(analytics_params).window
    table = analytics_table(training_log)
    trends = antibody_trends(table, trainer.warmup_steps, window)
    figure = plot_antibody_dynamics(table, trainer.warmup_steps, window)
    return table, trends, figure


def summarise_acceptance(eval_reports: dict, antibody_trends: dict, sticker_report: dict) -> dict:
    return acceptance_summary(eval_reports, trends=antibody_trends, sticker=sticker_report)
