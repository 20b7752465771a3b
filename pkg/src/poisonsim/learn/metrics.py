"""Threshold calibration and the evaluation metric suite."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .models import TreeEnsembleModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsRow:
    accuracy: float
    recall: float
    fpr: float
    roc_auc: float
    threshold: float


def roc_auc(y: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney rank statistic with tie-averaged ranks."""
    y = np.asarray(y)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return 0.5
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts + 1
    avg_rank = (starts + ends) / 2.0
    ranks = avg_rank[inverse]
    rank_sum = ranks[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def confusion_rates(
    y: np.ndarray, scores: np.ndarray, threshold: float
) -> tuple[float, float, float]:
    """(accuracy, recall, fpr) with labels assigned as score >= threshold."""
    pred = scores >= threshold
    pos = y == 1
    neg = ~pos
    tp = int((pred & pos).sum())
    fp = int((pred & neg).sum())
    tn = int((~pred & neg).sum())
    fn = int((~pred & pos).sum())
    accuracy = (tp + tn) / len(y) if len(y) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    fpr = fp / (fp + tn) if (fp + tn) else 0.0
    return accuracy, recall, fpr


def calibrate_threshold(
    model: TreeEnsembleModel, val: Dataset, target_fpr: float = 0.005
) -> float:
    """Smallest candidate threshold whose empirical FPR on val <= target.

    Candidates are the observed benign scores plus one value above the
    maximum, so the achieved FPR never exceeds the target.  The model's
    threshold attribute is updated in place.
    """
    benign = val.X[val.y == 0]
    if len(benign) == 0:
        raise ValueError("calibration requires at least one benign sample")
    scores = np.sort(np.unique(model.predict(benign)))
    above_max = np.nextafter(scores[-1], np.inf)
    n = (val.y == 0).sum()
    for candidate in np.append(scores, above_max):
        fpr = float((model.predict(benign) >= candidate).mean())
        if fpr <= target_fpr:
            if candidate == above_max and target_fpr > 0:
                logger.warning(
                    "no threshold reaches FPR <= %.4f except classify-all-benign",
                    target_fpr,
                )
            model.threshold = float(candidate)
            return model.threshold
    raise AssertionError("unreachable: the above-max candidate has FPR 0")


def evaluate(model: TreeEnsembleModel, test: Dataset) -> MetricsRow:
    """Accuracy / recall / FPR at the model's threshold, plus rank AUC."""
    scores = model.predict(test.X)
    accuracy, recall, fpr = confusion_rates(test.y, scores, model.threshold)
    return MetricsRow(
        accuracy=accuracy,
        recall=recall,
        fpr=fpr,
        roc_auc=roc_auc(test.y, scores),
        threshold=model.threshold,
    )


def summarize(rows: list[MetricsRow]) -> dict[str, tuple[float, float]]:
    """Per-field (mean, std) across folds or runs."""
    out = {}
    for name in ("accuracy", "recall", "fpr", "roc_auc", "threshold"):
        values = np.array([getattr(r, name) for r in rows])
        out[name] = (float(values.mean()), float(values.std()))
    return out
