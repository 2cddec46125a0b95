"""ROC/AUC computation and multi-run aggregation with mean-ROC bands."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabels


@dataclass(frozen=True)
class ScoredSet:
    """Scores (higher = more likely attack/synthetic) with boolean labels
    (True = positive class)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=bool)
        if scores.ndim != 1 or labels.ndim != 1 or scores.size != labels.size:
            raise ValueError("scores and labels must be 1-D sequences of equal length")
        if scores.size == 0:
            raise ValueError("scored set must not be empty")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    def require_both_classes(self):
        if self.labels.all() or not self.labels.any():
            raise DegenerateLabels("need at least one positive and one negative")


@dataclass(frozen=True)
class RocCurve:
    """Threshold-sweep curve from (0, 0) to (1, 1), nondecreasing in both axes."""

    fpr: np.ndarray
    tpr: np.ndarray


def roc_curve(scored: ScoredSet) -> RocCurve:
    """Standard threshold sweep; tied scores collapse into a single step."""
    scored.require_both_classes()
    order = np.argsort(-scored.scores, kind="stable")
    s = scored.scores[order]
    y = scored.labels[order]
    ends = np.append(np.flatnonzero(np.diff(s)) + 1, s.size)
    tp = np.cumsum(y)[ends - 1].astype(np.float64)
    fp = ends - tp
    p = float(y.sum())
    n = float(y.size - y.sum())
    fpr = np.concatenate(([0.0], fp / n))
    tpr = np.concatenate(([0.0], tp / p))
    return RocCurve(fpr, tpr)


def _area(curve: RocCurve) -> float:
    return float(np.sum((curve.fpr[1:] - curve.fpr[:-1]) * (curve.tpr[1:] + curve.tpr[:-1])) / 2.0)


def auc(scored: ScoredSet) -> float:
    """Trapezoidal area under the ROC curve.

    Equals the probability that a random positive outscores a random
    negative, with ties counted half.
    """
    return _area(roc_curve(scored))


@dataclass(frozen=True)
class EvalReport:
    """Per-run AUCs, their population mean/std, and a mean ROC band on a
    fixed FPR grid."""

    per_run_auc: np.ndarray
    mean: float
    std: float
    fpr_grid: np.ndarray
    mean_tpr: np.ndarray
    std_tpr: np.ndarray


def _tpr_at(curve: RocCurve, grid: np.ndarray) -> np.ndarray:
    # collapse vertical segments: the last point of each distinct FPR carries
    # the highest TPR attainable there
    last = np.flatnonzero(np.diff(np.append(curve.fpr, np.inf)))
    return np.interp(grid, curve.fpr[last], curve.tpr[last])


def summarize_runs(runs, fpr_grid_size: int = 101) -> EvalReport:
    """Aggregate independent runs: AUC mean/std (population formula) plus
    vertically averaged TPR with per-point std on a uniform FPR grid."""
    if not runs:
        raise ValueError("at least one run is required")
    if fpr_grid_size < 2:
        raise ValueError("fpr grid needs at least 2 points")
    grid = np.linspace(0.0, 1.0, fpr_grid_size)
    aucs = []
    tprs = []
    for run in runs:
        curve = roc_curve(run)
        aucs.append(_area(curve))
        tprs.append(_tpr_at(curve, grid))
    aucs = np.array(aucs)
    tprs = np.vstack(tprs)
    return EvalReport(
        per_run_auc=aucs,
        mean=float(aucs.mean()),
        std=float(aucs.std()),
        fpr_grid=grid,
        mean_tpr=tprs.mean(axis=0),
        std_tpr=tprs.std(axis=0),
    )
