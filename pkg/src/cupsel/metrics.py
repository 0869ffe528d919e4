"""Segmentation metrics from per-pixel confusion counts.

Vessel (1) is the positive class.  Degenerate denominators follow the
documented conventions rather than raising:

* Dice / IoU: both masks empty -> 1; exactly one side empty -> 0.
* MCC: any zero factor under the square root -> 0.
* BM: a sensitivity/specificity ratio with zero denominator contributes 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

METRIC_NAMES = ("dice", "iou", "mcc", "bm")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError(f"confusion counts must be non-negative, got {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


def confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    """Tally per-pixel confusion counts of two equal-size binary masks."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"mask dims differ: pred {pred.shape} vs gt {gt.shape}")
    p = pred != 0
    g = gt != 0
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return ConfusionCounts(tp, fp, fn, tn)


def dice(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return 2 * c.tp / denom


def iou(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return c.tp / denom


def mcc(c: ConfusionCounts) -> float:
    denom_sq = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom_sq == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom_sq)


def bm(c: ConfusionCounts) -> float:
    sens = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    spec = c.tn / (c.tn + c.fp) if c.tn + c.fp else 0.0
    return sens + spec - 1.0


def all_metrics(c: ConfusionCounts) -> dict[str, float]:
    return {"dice": dice(c), "iou": iou(c), "mcc": mcc(c), "bm": bm(c)}


@dataclass(frozen=True)
class MetricReport:
    """Per-image metric rows plus mean / sample-std aggregates."""

    per_image: tuple[dict, ...]
    aggregate: dict[str, dict[str, float]]


def evaluate_image(image_id: str, pred: np.ndarray, gt: np.ndarray) -> dict:
    row = {"image_id": image_id}
    row.update(all_metrics(confusion(pred, gt)))
    return row


def aggregate(per_image: list[dict]) -> MetricReport:
    """Mean and sample standard deviation (n-1; zero when n = 1) per metric."""
    if not per_image:
        raise ValueError("cannot aggregate an empty report")
    agg = {}
    for name in METRIC_NAMES:
        values = np.array([row[name] for row in per_image], dtype=np.float64)
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        agg[name] = {"mean": float(values.mean()), "std": std}
    return MetricReport(tuple(dict(row) for row in per_image), agg)
