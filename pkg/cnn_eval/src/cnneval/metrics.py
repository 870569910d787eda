"""Classification metrics for the two heads.

Everything is computed from the confusion matrix: per-class precision,
recall, F1, and specificity are averaged with equal class weight
(macro averaging), so rare classes count as much as common ones.
A class that never appears, or is never predicted, contributes zero to
the affected averages rather than NaN.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cnneval.model import DualHeadCnn, N_FAULT_TYPES
from cnneval.pmud import PmudDataset
from cnneval.train import predict


@dataclass
class HeadMetrics:
    """Summary scores and the confusion matrix for one classifier head.

    confusion[i, j] counts samples of true class i predicted as class j,
    so each row sums to the per-class sample count.
    """

    accuracy: float
    precision: float
    recall: float
    f1: float
    specificity: float
    confusion: np.ndarray


@dataclass
class MetricsReport:
    """Metrics for both heads of one evaluation run."""

    fault_type: HeadMetrics
    location: HeadMetrics


def confusion_matrix(truth: np.ndarray, pred: np.ndarray, n_classes: int) -> np.ndarray:
    """Count matrix with true classes on rows and predictions on columns."""
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise ValueError(f"label shapes differ: {truth.shape} vs {pred.shape}")
    for name, labels in (("true", truth), ("predicted", pred)):
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise ValueError(f"{name} labels outside [0, {n_classes})")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (truth, pred), 1)
    return matrix


def _safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def head_metrics(truth: np.ndarray, pred: np.ndarray, n_classes: int) -> HeadMetrics:
    """Macro-averaged scores for one head."""
    truth = np.asarray(truth, dtype=np.int64)
    if truth.size == 0:
        raise ValueError("empty test set: no samples to score")
    matrix = confusion_matrix(truth, pred, n_classes)
    total = matrix.sum()
    tp = np.diag(matrix).astype(np.float64)
    fp = matrix.sum(axis=0) - tp
    fn = matrix.sum(axis=1) - tp
    tn = total - tp - fp - fn
    precision = _safe_divide(tp, tp + fp)
    recall = _safe_divide(tp, tp + fn)
    f1 = _safe_divide(2.0 * precision * recall, precision + recall)
    specificity = _safe_divide(tn, tn + fp)
    return HeadMetrics(
        accuracy=float(tp.sum() / total),
        precision=float(precision.mean()),
        recall=float(recall.mean()),
        f1=float(f1.mean()),
        specificity=float(specificity.mean()),
        confusion=matrix,
    )


def evaluate(model: DualHeadCnn, test_set: PmudDataset, batch_size: int = 256) -> MetricsReport:
    """Score a trained model on a held-out dataset."""
    if len(test_set) == 0:
        raise ValueError("empty test set: no samples to score")
    kind_pred, loc_pred = predict(model, test_set.x, batch_size)
    return MetricsReport(
        fault_type=head_metrics(test_set.type_index, kind_pred, N_FAULT_TYPES),
        location=head_metrics(test_set.loc_index, loc_pred, model.config.n_loc),
    )


def write_confusion_csv(path: str | Path, matrix: np.ndarray, labels: list[str]) -> None:
    """Write a confusion matrix with named rows and columns."""
    if len(labels) != matrix.shape[0]:
        raise ValueError(f"{len(labels)} labels for a {matrix.shape[0]}-class matrix")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["true\\pred"] + labels)
        for name, row in zip(labels, matrix):
            writer.writerow([name] + [int(v) for v in row])


def write_metrics_csv(path: str | Path, report: MetricsReport) -> None:
    """Write the summary scores of both heads as one small table."""
    fields = ["accuracy", "precision", "recall", "f1", "specificity"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["head"] + fields)
        for head, m in (("fault_type", report.fault_type), ("location", report.location)):
            writer.writerow([head] + [f"{getattr(m, f):.6f}" for f in fields])


def save_confusion_figure(
    path: str | Path, matrix: np.ndarray, labels: list[str], title: str
) -> None:
    """Render a confusion matrix heat map to an image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = matrix.shape[0]
    side = max(4.0, 0.45 * n)
    fig, ax = plt.subplots(figsize=(side, side))
    ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(n), labels, rotation=90, fontsize=7)
    ax.set_yticks(range(n), labels, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    if n <= 20:
        peak = matrix.max() if matrix.max() > 0 else 1
        for i in range(n):
            for j in range(n):
                colour = "white" if matrix[i, j] > 0.6 * peak else "black"
                ax.text(j, i, str(int(matrix[i, j])), ha="center", va="center",
                        color=colour, fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
