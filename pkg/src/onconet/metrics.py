"""Binary-classification evaluation: rank-based ROC AUC, sensitivity and
specificity at a threshold, and report serialization.

Scores are predicted death probabilities; label 1 means death.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "MetricsReport",
    "roc_auc",
    "roc_auc_trapezoid",
    "roc_points",
    "sens_spec",
    "write_report",
    "write_roc_csv",
]


@dataclass(frozen=True)
class MetricsReport:
    auc: float
    sensitivity: float
    specificity: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_pos: int
    n_neg: int

    def __post_init__(self) -> None:
        assert self.tp + self.fn == self.n_pos
        assert self.tn + self.fp == self.n_neg

    def format(self) -> str:
        lines = [
            "metric       value",
            f"auc          {self.auc:.6f}",
            f"sensitivity  {self.sensitivity:.6f}",
            f"specificity  {self.specificity:.6f}",
            f"threshold    {self.threshold:.6f}",
            f"tp/fp/tn/fn  {self.tp}/{self.fp}/{self.tn}/{self.fn}",
            f"n_pos/n_neg  {self.n_pos}/{self.n_neg}",
        ]
        return "\n".join(lines)

    def as_dict(self) -> dict[str, float | int]:
        return {
            "auc": self.auc,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "threshold": self.threshold,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
        }


def _validate(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape[0] != y.shape[0]:
        raise ValueError(f"{s.shape[0]} scores for {y.shape[0]} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if y.sum() == 0 or y.sum() == len(y):
        raise ValueError("both classes must be present to compute ROC metrics")
    return s, y


def _average_ranks(s: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their group average."""
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[order[j + 1]] == s[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        ranks[order[i : j + 1]] = avg
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Rank-based (Mann-Whitney) AUC; tied pairs count one half."""
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    ranks = _average_ranks(s)
    rank_sum = ranks[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_points(scores, labels) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) points of the empirical ROC curve, from the
    all-negative corner to the all-positive corner."""
    s, y = _validate(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    order = np.argsort(-s, kind="stable")
    points = [(0.0, 0.0, float("inf"))]
    tp = fp = 0
    i = 0
    while i < len(s):
        thr = s[order[i]]
        while i < len(s) and s[order[i]] == thr:
            if y[order[i]] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / n_neg, tp / n_pos, float(thr)))
    return points


def roc_auc_trapezoid(scores, labels) -> float:
    """AUC by trapezoidal integration of the empirical ROC curve.

    Independent of the rank computation; the two agree to near machine
    precision (exactly, on tie-free data).
    """
    pts = roc_points(scores, labels)
    area = 0.0
    for (x0, y0, _), (x1, y1, _) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return float(area)


def sens_spec(scores, labels, threshold: float = 0.5) -> MetricsReport:
    """Confusion counts and rates predicting death when score >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    s, y = _validate(scores, labels)
    pred = (s >= threshold).astype(np.int64)
    tp = int(((pred == 1) & (y == 1)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    n_pos = tp + fn
    n_neg = tn + fp
    return MetricsReport(
        auc=roc_auc(s, y),
        sensitivity=tp / n_pos,
        specificity=tn / n_neg,
        threshold=threshold,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        n_pos=n_pos,
        n_neg=n_neg,
    )


def write_report(report: MetricsReport, txt_path, kv_path=None) -> None:
    """Emit the plain-text table and, optionally, a machine-readable
    key=value file."""
    Path(txt_path).write_text(report.format() + "\n")
    if kv_path is not None:
        lines = [f"{k}={v}" for k, v in report.as_dict().items()]
        Path(kv_path).write_text("\n".join(lines) + "\n")


def write_roc_csv(scores, labels, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, thr in roc_points(scores, labels):
            writer.writerow([f"{fpr:.10g}", f"{tpr:.10g}", f"{thr:.10g}"])
