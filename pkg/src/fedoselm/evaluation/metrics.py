"""Threshold-free ranking metrics."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def roc_auc(scores_normal, scores_anomalous) -> float:
    """P(anomalous score > normal score), ties counting one half.

    Computed from the Mann-Whitney U statistic over average ranks, which
    matches trapezoidal integration of the ROC curve exactly.
    """
    normal = np.asarray(scores_normal, dtype=np.float64).ravel()
    anomalous = np.asarray(scores_anomalous, dtype=np.float64).ravel()
    if normal.size == 0 or anomalous.size == 0:
        raise ValueError("roc_auc needs at least one normal and one anomalous score")
    if not (np.all(np.isfinite(normal)) and np.all(np.isfinite(anomalous))):
        raise ValueError("roc_auc scores must be finite")
    ranks = rankdata(np.concatenate([normal, anomalous]), method="average")
    n_a = anomalous.size
    u = ranks[normal.size:].sum() - n_a * (n_a + 1) / 2.0
    return float(u / (normal.size * n_a))
