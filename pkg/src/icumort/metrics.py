"""Binary classification evaluation: confusion counts, P/R/F1, ROC, AUC.

The trapezoidal AUC over the ROC sweep is cross-checked (in tests and on
demand) against an independent concordance oracle that enumerates every
positive/negative pair, crediting ties one half. Tied scores collapse to a
single ROC point, so both routes agree to machine precision.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, DimensionError


@dataclass
class EvalReport:
    n: int
    positives: int
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    auc: float
    roc_points: list[tuple[float, float]]


def _check_pair(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise DimensionError(
            f"scores and labels differ in length: {scores.shape} vs {labels.shape}"
        )
    if not np.all((labels == 0) | (labels == 1)):
        raise DataError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def confusion(scores: Sequence[float], labels: Sequence[int],
              threshold: float) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) counting score >= threshold as a positive call."""
    scores, labels = _check_pair(scores, labels)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    tn = int(np.sum(~pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    return tp, fp, tn, fn


def prf1(tp: int, fp: int, tn: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1; empty denominators yield 0 by convention.

    F1 uses the count form 2tp/(2tp+fp+fn), which equals the harmonic mean
    of precision and recall wherever that is defined and rounds exactly.
    """
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn > 0 else 0.0
    return precision, recall, f1


def roc_curve_with_thresholds(
    scores: Sequence[float], labels: Sequence[int]
) -> list[tuple[float, float, Optional[float]]]:
    """ROC points (fpr, tpr, threshold), threshold None on appended endpoints.

    Thresholds sweep the distinct scores in descending order; all samples
    tied at one score enter together, so ties produce a single point and the
    curve crosses any tie block along one diagonal segment. (0,0) is
    prepended and (1,1) appended when the sweep does not already end there.
    """
    scores, labels = _check_pair(scores, labels)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC requires both classes present")
    order = np.argsort(-scores, kind="stable")
    points: list[tuple[float, float, Optional[float]]] = [(0.0, 0.0, None)]
    tp = fp = 0
    idx = 0
    while idx < scores.size:
        value = scores[order[idx]]
        while idx < scores.size and scores[order[idx]] == value:
            if labels[order[idx]] == 1:
                tp += 1
            else:
                fp += 1
            idx += 1
        point = (fp / n_neg, tp / n_pos, float(value))
        if (point[0], point[1]) != (points[-1][0], points[-1][1]):
            points.append(point)
    if (points[-1][0], points[-1][1]) != (1.0, 1.0):
        points.append((1.0, 1.0, None))
    return points


def roc_curve(scores: Sequence[float], labels: Sequence[int]
              ) -> list[tuple[float, float]]:
    """ROC points (fpr, tpr) including (0,0) and (1,1)."""
    return [(x, y) for x, y, _ in roc_curve_with_thresholds(scores, labels)]


def auc(roc_points: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area under an ROC point list."""
    area = 0.0
    for (x0, y0), (x1, y1) in zip(roc_points, roc_points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def auc_oracle(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Concordance AUC by exhaustive pair enumeration; ties credit one half."""
    scores, labels = _check_pair(scores, labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise DataError("AUC requires both classes present")
    concordant = np.sum(pos[:, None] > neg[None, :])
    tied = np.sum(pos[:, None] == neg[None, :])
    return float((concordant + 0.5 * tied) / (pos.size * neg.size))


def evaluate_scores(scores: Sequence[float], labels: Sequence[int],
                    threshold: float = 0.5) -> EvalReport:
    """Full evaluation of one model on one split."""
    scores_arr, labels_arr = _check_pair(scores, labels)
    tp, fp, tn, fn = confusion(scores_arr, labels_arr, threshold)
    precision, recall, f1 = prf1(tp, fp, tn, fn)
    points = roc_curve(scores_arr, labels_arr)
    return EvalReport(
        n=int(labels_arr.size),
        positives=int(labels_arr.sum()),
        threshold=threshold,
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=precision, recall=recall, f1=f1,
        auc=auc(points),
        roc_points=points,
    )


def write_roc_csv(path: str | Path, scores: Sequence[float],
                  labels: Sequence[int]) -> None:
    """Export the ROC as ``fpr,tpr,threshold`` (blank on appended endpoints)."""
    points = roc_curve_with_thresholds(scores, labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, thr in points:
            writer.writerow([
                f"{fpr:.9g}", f"{tpr:.9g}",
                "" if thr is None else f"{thr:.9g}",
            ])


_REPORT_HEADER = [
    "model", "split", "n", "positives", "threshold",
    "tp", "fp", "tn", "fn", "precision", "recall", "f1", "auc",
]


def write_report_csv(path: str | Path,
                     reports: Sequence[tuple[str, str, EvalReport]]) -> None:
    """One row per (model, split) with all scalar report fields."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_REPORT_HEADER)
        for model, split, r in reports:
            writer.writerow([
                model, split, r.n, r.positives, f"{r.threshold:.9g}",
                r.tp, r.fp, r.tn, r.fn,
                f"{r.precision:.9g}", f"{r.recall:.9g}",
                f"{r.f1:.9g}", f"{r.auc:.9g}",
            ])
