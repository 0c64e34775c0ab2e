"""Point-adjusted evaluation: precision/recall/F1, ROC over a ratio grid,
and the adjacent-association contrast statistic.

Point adjustment follows the segment convention: if any point inside a
maximal run of true anomalies is predicted, the whole run counts as
detected.  Predictions outside true runs are left untouched.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .detection import ScoreSeries, ThresholdSpec, predict, select_threshold
from .errors import ContractError

DEFAULT_R_GRID = (0.005, 0.01, 0.015, 0.02, 0.10, 0.20, 0.30)


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float
    degenerate: bool  # a zero-division was replaced by 0


class RocPoint(NamedTuple):
    r: float
    delta: float
    fpr: float
    tpr: float


class Contrast(NamedTuple):
    abnormal_mean: Optional[float]
    normal_mean: Optional[float]
    ratio: Optional[float]


def _runs(truth: np.ndarray) -> List[Tuple[int, int]]:
    """Maximal [start, end) runs of ones."""
    diff = np.diff(truth.astype(np.int8), prepend=0, append=0)
    starts = np.nonzero(diff == 1)[0]
    ends = np.nonzero(diff == -1)[0]
    return list(zip(starts.tolist(), ends.tolist()))


def point_adjust(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Expand any hit inside a true anomaly run to the whole run."""
    pred = np.asarray(pred).astype(np.int64)
    truth = np.asarray(truth).astype(np.int64)
    if pred.shape != truth.shape:
        raise ContractError(
            f"pred length {pred.shape} does not match truth length {truth.shape}"
        )
    adjusted = pred.copy()
    for start, end in _runs(truth):
        if adjusted[start:end].any():
            adjusted[start:end] = 1
    return adjusted


def prf(pred: np.ndarray, truth: np.ndarray) -> PRF:
    """Pointwise precision, recall and F1; zero divisions yield flagged zeros."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    degenerate = False
    if tp + fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0.0:
        f1, degenerate = 0.0, True
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return PRF(precision, recall, f1, degenerate)


def _rates(pred: np.ndarray, truth: np.ndarray) -> Tuple[float, float]:
    """(fpr, tpr) of a binary prediction."""
    pred = pred.astype(bool)
    truth = truth.astype(bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    tpr = tp / (tp + fn) if tp + fn else 0.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    return fpr, tpr


def roc_auc(
    test_scores: np.ndarray,
    truth: np.ndarray,
    val_scores: np.ndarray,
    r_grid: Sequence[float] = DEFAULT_R_GRID,
) -> Tuple[List[RocPoint], float]:
    """Point-adjusted ROC over validation-ratio thresholds, trapezoidal AUC.

    The curve is anchored at (0, 0) and (1, 1) and integrated over
    fpr-sorted points.
    """
    if len(r_grid) == 0:
        raise ContractError("r_grid must be non-empty")
    test_scores = np.asarray(test_scores, dtype=np.float64)
    truth = np.asarray(truth).astype(np.int64)
    points = []
    for r in r_grid:
        delta = select_threshold(val_scores, ThresholdSpec(mode="ratio_r", r=r))
        adjusted = point_adjust(predict(test_scores, delta), truth)
        fpr, tpr = _rates(adjusted, truth)
        points.append(RocPoint(r=float(r), delta=delta, fpr=fpr, tpr=tpr))
    xs = [0.0] + [p.fpr for p in points] + [1.0]
    ys = [0.0] + [p.tpr for p in points] + [1.0]
    order = np.lexsort((ys, xs))
    xs = np.asarray(xs)[order]
    ys = np.asarray(ys)[order]
    auc = float(np.trapezoid(ys, xs))
    return points, auc


def contrast_statistic(
    score_series: ScoreSeries,
    truth: np.ndarray,
    adj_width: int = 10,
) -> Contrast:
    """Mean adjacent series-association weight at abnormal vs normal points.

    For point i scored by window w, the adjacent weight is the mean of the
    head- and layer-averaged series map entries S[i, j] over the in-window
    neighbours 0 < |j - i| <= adj_width.  Returns the two group means and
    their abnormal/normal ratio; groups that are empty report None.
    """
    if score_series.series_maps is None:
        raise ContractError("score the series with keep_series_maps=True first")
    truth = np.asarray(truth).astype(np.int64)
    m = len(score_series)
    if truth.shape[0] != m:
        raise ContractError(f"truth length {truth.shape[0]} != scored length {m}")
    n = score_series.series_maps[0].shape[0]
    w = adj_width
    if n < 2 * w + 1:
        w = max(1, (n - 1) // 2)
        warnings.warn(
            f"window {n} too small for adjacency width {adj_width}; using {w}",
            stacklevel=2,
        )
    adjacent = np.empty(m)
    for i in range(m):
        wid = score_series.window_id[i]
        row = i - score_series.window_starts[wid]
        smap = score_series.series_maps[wid]
        lo, hi = max(0, row - w), min(n, row + w + 1)
        band = np.concatenate([smap[row, lo:row], smap[row, row + 1 : hi]])
        adjacent[i] = band.mean()
    abnormal = adjacent[truth == 1]
    normal = adjacent[truth == 0]
    abnormal_mean = float(abnormal.mean()) if abnormal.size else None
    normal_mean = float(normal.mean()) if normal.size else None
    ratio = (
        abnormal_mean / normal_mean
        if abnormal_mean is not None and normal_mean not in (None, 0.0)
        else None
    )
    return Contrast(abnormal_mean, normal_mean, ratio)


@dataclass
class EvalReport:
    """Everything the evaluation stage produces, JSON-serialisable."""

    precision: float
    recall: float
    f1: float
    degenerate: bool
    delta: float
    criterion: str
    roc: List[RocPoint] = field(default_factory=list)
    auc: float = 0.0
    contrast: Optional[Contrast] = None

    def to_json(self) -> str:
        payload = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "degenerate": self.degenerate,
            "delta": self.delta,
            "criterion": self.criterion,
            "roc": [p._asdict() for p in self.roc],
            "auc": self.auc,
            "contrast": None if self.contrast is None else self.contrast._asdict(),
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        return cls(
            precision=raw["precision"],
            recall=raw["recall"],
            f1=raw["f1"],
            degenerate=raw["degenerate"],
            delta=raw["delta"],
            criterion=raw["criterion"],
            roc=[RocPoint(**p) for p in raw["roc"]],
            auc=raw["auc"],
            contrast=None if raw["contrast"] is None else Contrast(**raw["contrast"]),
        )

    def table(self) -> str:
        """Plain-text metric table."""
        lines = [
            "metric      value",
            "---------   ------",
            f"precision   {self.precision:.4f}",
            f"recall      {self.recall:.4f}",
            f"f1          {self.f1:.4f}",
            f"auc         {self.auc:.4f}",
            f"delta       {self.delta:.6g}",
        ]
        if self.contrast is not None and self.contrast.ratio is not None:
            lines.append(f"contrast    {self.contrast.ratio:.4f}")
        return "\n".join(lines) + "\n"


def evaluate(
    test_scores: np.ndarray,
    truth: np.ndarray,
    val_scores: np.ndarray,
    threshold: ThresholdSpec,
    criterion: str,
    r_grid: Sequence[float] = DEFAULT_R_GRID,
    score_series: Optional[ScoreSeries] = None,
    adj_width: int = 10,
) -> EvalReport:
    """Full evaluation: threshold, point-adjusted PRF, ROC/AUC, contrast."""
    test_scores = np.asarray(test_scores, dtype=np.float64)
    truth = np.asarray(truth).astype(np.int64)
    if test_scores.shape[0] != truth.shape[0]:
        raise ContractError(
            f"scores length {test_scores.shape[0]} != labels length {truth.shape[0]}"
        )
    delta = select_threshold(val_scores, threshold)
    adjusted = point_adjust(predict(test_scores, delta), truth)
    scores_prf = prf(adjusted, truth)
    roc, auc = roc_auc(test_scores, truth, val_scores, r_grid)
    contrast = None
    if score_series is not None and score_series.series_maps is not None:
        contrast = contrast_statistic(score_series, truth, adj_width)
    return EvalReport(
        precision=scores_prf.precision,
        recall=scores_prf.recall,
        f1=scores_prf.f1,
        degenerate=scores_prf.degenerate,
        delta=delta,
        criterion=criterion,
        roc=roc,
        auc=auc,
        contrast=contrast,
    )
