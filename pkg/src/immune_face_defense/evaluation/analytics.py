"""Antibody dynamics over a training log: per-step table, trend checks and figure."""

import logging
import math

import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

logger = logging.getLogger(__name__)

ANALYTICS_COLUMNS = ["STEP", "PHASE", "MEAN_CARDINALITY", "P_MUTATION", "SPECIFICITY_V"]
PLOTTED = {
    "MEAN_CARDINALITY": "sparsity |a|",
    "P_MUTATION": "mutation probability",
    "SPECIFICITY_V": "specificity V",
}


def analytics_table(log_frame: pd.DataFrame) -> pd.DataFrame:
    """One row per logged step with the antibody statistics only.

    Aborted steps stay in the table with their NaN diagnostics so that the row
    count always equals the number of logged steps.
    """
    missing = [column for column in ANALYTICS_COLUMNS if column not in log_frame.columns]
    if missing:
        raise ValueError(f"Training log lacks columns {missing}")
    return log_frame[ANALYTICS_COLUMNS].sort_values("STEP", kind="stable").reset_index(drop=True)


def _window_mean(values: pd.Series, window: int, head: bool) -> float:
    values = values.dropna()
    if values.empty:
        return math.nan
    part = values.head(window) if head else values.tail(window)
    return float(part.mean())


def phase_windows(
    log_frame: pd.DataFrame, column: str, warmup_steps: int, window: int
) -> dict[str, float]:
    """Windowed means of ``column`` at the four landmarks of a two-phase run.

    Returns:
        dict with ``warmup_start``, ``warmup_end``, ``adversarial_start`` and
        ``adversarial_end``; NaN where the phase has no finite entries
    """
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    ordered = log_frame.sort_values("STEP", kind="stable")
    warmup = ordered.loc[ordered["STEP"] < warmup_steps, column]
    adversarial = ordered.loc[ordered["STEP"] >= warmup_steps, column]
    return {
        "warmup_start": _window_mean(warmup, window, head=True),
        "warmup_end": _window_mean(warmup, window, head=False),
        "adversarial_start": _window_mean(adversarial, window, head=True),
        "adversarial_end": _window_mean(adversarial, window, head=False),
    }


def _above(first: float, second: float) -> bool | None:
    if math.isnan(first) or math.isnan(second):
        return None
    return first > second


def antibody_trends(log_frame: pd.DataFrame, warmup_steps: int, window: int = 100) -> dict:
    """Directional checks on sparsity, mutation probability and specificity.

    A check is None when one of the windows it compares is empty.
    """
    cardinality = phase_windows(log_frame, "MEAN_CARDINALITY", warmup_steps, window)
    mutation = phase_windows(log_frame, "P_MUTATION", warmup_steps, window)
    specificity = phase_windows(log_frame, "SPECIFICITY_V", warmup_steps, window)
    trends = {
        "cardinality_rises_in_warmup": _above(cardinality["warmup_end"], cardinality["warmup_start"]),
        "cardinality_falls_after_switch": _above(
            cardinality["warmup_end"], cardinality["adversarial_end"]
        ),
        "mutation_falls_in_warmup": _above(mutation["warmup_start"], mutation["warmup_end"]),
        "mutation_rises_at_switch": _above(mutation["adversarial_start"], mutation["warmup_end"]),
        "mutation_ends_below_switch": _above(
            mutation["adversarial_start"], mutation["adversarial_end"]
        ),
        "specificity_grows": _above(specificity["adversarial_end"], specificity["warmup_end"]),
    }
    for name, value in trends.items():
        if value is False:
            logger.warning("Antibody trend '%s' not observed", name)
    return {
        "window": window,
        "warmup_steps": warmup_steps,
        "trends": trends,
        "windows": {
            "MEAN_CARDINALITY": cardinality,
            "P_MUTATION": mutation,
            "SPECIFICITY_V": specificity,
        },
    }


def plot_antibody_dynamics(
    log_frame: pd.DataFrame, warmup_steps: int, window: int = 100
) -> plt.Figure:
    """Three panels of rolling means, the phase switch marked by a dashed line."""
    sns.set_theme(style="whitegrid")
    fig, axes = plt.subplots(1, len(PLOTTED), figsize=(15, 4))
    table = analytics_table(log_frame)
    for ax, (column, label) in zip(axes, PLOTTED.items()):
        smoothed = table[column].rolling(window, min_periods=1).mean()
        sns.lineplot(x=table["STEP"], y=smoothed, ax=ax, color="steelblue")
        if 0 < warmup_steps <= table["STEP"].max():
            ax.axvline(warmup_steps, color="grey", linestyle="--", label="adversarial phase")
            ax.legend(loc="best")
        ax.set_xlabel("step")
        ax.set_ylabel(label)
        ax.set_title(label)
    fig.tight_layout()
    return fig
