"""Verification error rates.

``FRR(T)`` is the share of positive pairs rejected (score ``<= T``) and
``FAR(T)`` the share of negative pairs accepted (score ``> T``). The equal error
rate is read off the crossing of the two step curves.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.metrics import roc_auc_score

CURVE_COLUMNS = ["THRESHOLD", "FAR", "FRR"]
SCORE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ScoreSet:
    """Cosine scores of positive (``S_p``) and negative (``S_n``) pairs."""

    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self) -> None:
        for name in ("positive", "negative"):
            scores = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if scores.size and (
                not np.isfinite(scores).all()
                or scores.min() < -1 - SCORE_TOLERANCE
                or scores.max() > 1 + SCORE_TOLERANCE
            ):
                raise ValueError(f"{name} scores must be finite and within [-1, 1]")
            object.__setattr__(self, name, scores)

    @property
    def n_positive(self) -> int:
        return int(self.positive.size)

    @property
    def n_negative(self) -> int:
        return int(self.negative.size)


def _check_non_empty(scores: ScoreSet) -> None:
    if scores.n_positive < 1 or scores.n_negative < 1:
        raise ValueError(
            f"EER needs at least one score per side, got N_p={scores.n_positive}, "
            f"N_n={scores.n_negative}"
        )


def _error_counts(scores: ScoreSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thresholds with rejected-positive and accepted-negative counts.

    The first entry stands for a threshold just below the lowest score and
    carries the lowest score as its threshold.
    """
    _check_non_empty(scores)
    thresholds = np.unique(np.concatenate([scores.positive, scores.negative]))
    rejected = np.searchsorted(np.sort(scores.positive), thresholds, side="right")
    accepted = scores.n_negative - np.searchsorted(
        np.sort(scores.negative), thresholds, side="right"
    )
    return (
        np.concatenate([[thresholds[0]], thresholds]),
        np.concatenate([[0], rejected]),
        np.concatenate([[scores.n_negative], accepted]),
    )


def far_frr_curve(scores: ScoreSet) -> pd.DataFrame:
    """FAR and FRR at every distinct score used as threshold."""
    thresholds, rejected, accepted = _error_counts(scores)
    return pd.DataFrame(
        {
            "THRESHOLD": thresholds,
            "FAR": accepted / scores.n_negative,
            "FRR": rejected / scores.n_positive,
        },
        columns=CURVE_COLUMNS,
    )


def compute_eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and the threshold where it occurs.

    Walks the FAR/FRR curve to the first threshold where FRR reaches FAR and
    interpolates linearly with the previous threshold when they step past each
    other without meeting.

    Example:
        >>> compute_eer(ScoreSet(np.array([0.9, 0.8, 0.7]), np.array([0.75, 0.2, 0.1])))
        (0.3333333333333333, 0.7)

    Raises:
        ValueError: If either side has no scores
    """
    thresholds, rejected, accepted = _error_counts(scores)
    frr = rejected / scores.n_positive
    far = accepted / scores.n_negative
    # exact comparison of FRR against FAR on integer counts
    gap_sign = np.sign(rejected * scores.n_negative - accepted * scores.n_positive)
    crossing = int(np.argmax(gap_sign >= 0))
    if gap_sign[crossing] == 0:
        return float(frr[crossing]), float(thresholds[crossing])
    gap = frr - far
    before = crossing - 1
    weight = -gap[before] / (gap[crossing] - gap[before])
    eer = frr[before] + weight * (frr[crossing] - frr[before])
    threshold = thresholds[before] + weight * (thresholds[crossing] - thresholds[before])
    return float(eer), float(threshold)


def roc_auc(scores: ScoreSet) -> float:
    """Area under the ROC curve with positive pairs as the positive class."""
    _check_non_empty(scores)
    labels = np.concatenate([np.ones(scores.n_positive), np.zeros(scores.n_negative)])
    return float(roc_auc_score(labels, np.concatenate([scores.positive, scores.negative])))
