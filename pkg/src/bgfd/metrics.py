"""Pixel confusion counts and the five change-detection scores."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError, UsageError, ValidationError

METRIC_KEYS = ("oa", "iou", "f1", "recall", "precision")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def fp_rate(self) -> float:
        neg = self.fp + self.tn
        return self.fp / neg if neg else 0.0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class MetricsReport:
    oa: float
    iou: float
    f1: float
    recall: float
    precision: float
    beta: float = 1.0

    def as_dict(self) -> dict:
        return {k: round(getattr(self, k), 6) for k in METRIC_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.as_dict())

    def to_csv_row(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if header:
            writer.writerow(METRIC_KEYS)
        writer.writerow([f"{getattr(self, k):.6f}" for k in METRIC_KEYS])
        return buf.getvalue()


def confusion(pred, gt) -> ConfusionCounts:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"mask dims differ: pred {pred.shape} vs gt {gt.shape}")
    for name, m in (("pred", pred), ("gt", gt)):
        if not np.isin(m, (0, 1)).all():
            raise ValidationError(f"{name} mask must contain only 0 and 1")
    p, g = pred.astype(bool), gt.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, int(p.size) - tp - fp - fn)


def compute_metrics(c: ConfusionCounts, beta: float = 1.0) -> MetricsReport:
    if c.total <= 0:
        raise UsageError("compute_metrics needs at least one evaluated pixel")
    vacuous = c.tp == 0 and c.fp == 0 and c.fn == 0

    def ratio(num, den):
        if den == 0:
            return 1.0 if vacuous else 0.0
        return num / den

    precision = ratio(c.tp, c.tp + c.fp)
    recall = ratio(c.tp, c.tp + c.fn)
    iou = ratio(c.tp, c.tp + c.fn + c.fp)
    oa = (c.tp + c.tn) / c.total
    b2 = beta * beta
    f1 = ratio((1 + b2) * precision * recall, b2 * (precision + recall))
    return MetricsReport(oa=oa, iou=iou, f1=f1, recall=recall, precision=precision, beta=beta)


def counts_to_dict(c: ConfusionCounts) -> dict:
    return asdict(c)
