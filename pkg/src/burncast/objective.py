"""Training loss and segmentation metrics.

The loss combines per-pixel binary cross-entropy with a soft Dice term
computed from sigmoid probabilities pooled over the whole batch. Metrics are
exact integer confusion counts with the standard overlap formulas on top.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .validation import check_binary, check_same_shape


@dataclass(frozen=True)
class LossConfig:
    bce_weight: float = 1.0
    dice_weight: float = 1.0
    smooth: float = 1.0

    def __post_init__(self):
        if self.bce_weight < 0 or self.dice_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.bce_weight == 0 and self.dice_weight == 0:
            raise ValueError("at least one loss weight must be positive")
        if self.smooth <= 0:
            raise ValueError("smoothing constant must be positive")


def bce_dice_loss(logits: torch.Tensor, target: torch.Tensor,
                  config: LossConfig = LossConfig()) -> torch.Tensor:
    """Weighted sum of mean BCE and soft Dice loss over one batch pool.

    Dice uses probabilities, not thresholded masks:
    1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps).
    """
    if logits.shape != target.shape:
        raise ValueError(f"logits shape {tuple(logits.shape)} != target shape {tuple(target.shape)}")
    tvals = target.detach()
    if not torch.all((tvals == 0) | (tvals == 1)):
        raise ValueError("target mask must be binary")
    target = target.to(logits.dtype)

    loss = logits.new_zeros(())
    if config.bce_weight:
        loss = loss + config.bce_weight * F.binary_cross_entropy_with_logits(logits, target)
    if config.dice_weight:
        p = torch.sigmoid(logits)
        inter = (p * target).sum()
        dice = (2.0 * inter + config.smooth) / (p.sum() + target.sum() + config.smooth)
        loss = loss + config.dice_weight * (1.0 - dice)
    return loss


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other):
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass(frozen=True)
class SegmentationMetrics:
    dice: float
    iou: float
    precision: float
    recall: float
    counts: ConfusionCounts = None

    def as_dict(self):
        return {
            "dice": self.dice,
            "iou": self.iou,
            "precision": self.precision,
            "recall": self.recall,
        }


def confusion_counts(pred, target, region=None) -> ConfusionCounts:
    """Exact pixel confusion counts between two binary masks.

    region, when given, is a boolean mask restricting which pixels count.
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    check_same_shape(pred, target, ("pred", "target"))
    check_binary(pred, "pred")
    check_binary(target, "target")
    if region is not None:
        region = np.asarray(region, dtype=bool)
        check_same_shape(pred, region, ("pred", "region"))
        pred = pred[region]
        target = target[region]
    p = pred.astype(bool)
    t = target.astype(bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
    )


def _ratio(num, den, empty_ok):
    if den == 0:
        return 1.0 if empty_ok else 0.0
    return num / den


def metrics_from_counts(counts: ConfusionCounts) -> SegmentationMetrics:
    """Dice, IoU, precision, and recall from confusion counts.

    Zero-denominator convention: a metric whose denominator is zero is 1
    when prediction and reference are both empty (tp = fp = fn = 0), else 0.
    """
    both_empty = counts.tp == 0 and counts.fp == 0 and counts.fn == 0
    return SegmentationMetrics(
        dice=_ratio(2.0 * counts.tp, 2.0 * counts.tp + counts.fp + counts.fn, both_empty),
        iou=_ratio(counts.tp, counts.tp + counts.fp + counts.fn, both_empty),
        precision=_ratio(counts.tp, counts.tp + counts.fp, both_empty),
        recall=_ratio(counts.tp, counts.tp + counts.fn, both_empty),
        counts=counts,
    )


def aggregate_metrics(counts_list, mode="micro") -> SegmentationMetrics:
    """Aggregate per-sample confusion counts across a split.

    micro pools the counts and scores the pool; macro averages the
    per-sample metrics without weighting.
    """
    counts_list = list(counts_list)
    if not counts_list:
        raise ValueError("cannot aggregate an empty list of counts")
    if mode == "micro":
        pooled = counts_list[0]
        for c in counts_list[1:]:
            pooled = pooled + c
        return metrics_from_counts(pooled)
    if mode == "macro":
        per = [metrics_from_counts(c) for c in counts_list]
        return SegmentationMetrics(
            dice=float(np.mean([m.dice for m in per])),
            iou=float(np.mean([m.iou for m in per])),
            precision=float(np.mean([m.precision for m in per])),
            recall=float(np.mean([m.recall for m in per])),
        )
    raise ValueError(f"unknown aggregation mode {mode!r}")
