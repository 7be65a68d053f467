"""Training and evaluation loops."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from ..core import cross_entropy
from ..core.optim import AdamW
from ..data import Dataset
from ..errors import DivergenceError, ShapeError, UsageError
from ..metrics import ConfusionCounts, MetricsReport, compute_metrics, confusion
from .config import ModelConfig
from .model import ChangeDetector, build_model

log = logging.getLogger(__name__)


@dataclass
class TrainReport:
    seg_loss: List[float]
    mi_loss: List[float]
    total_loss: List[float]
    metrics: Optional[MetricsReport]
    seed: int
    config: dict
    forward_passes: int = 0
    wall_time: float = 0.0
    counts: Optional[ConfusionCounts] = None

    def to_dict(self, include_timing: bool = False) -> dict:
        """JSON-ready dict. Wall time is left out unless asked for so that
        reruns serialise identically."""
        d = {
            "seed": self.seed,
            "iterations": len(self.total_loss),
            "forward_passes": self.forward_passes,
            "loss": {"segmentation": self.seg_loss, "mi": self.mi_loss, "total": self.total_loss},
            "metrics": self.metrics.as_dict() if self.metrics else None,
            "confusion": vars(self.counts) if self.counts else None,
            "config": self.config,
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


@dataclass
class TrainResult:
    model: ChangeDetector
    report: TrainReport


def batch_order(n: int, batch_size: int, iterations: int, rng: np.random.Generator):
    """Yield index arrays, reshuffling once per pass over the data."""
    perm, pos = rng.permutation(n), 0
    for _ in range(iterations):
        idx = []
        while len(idx) < min(batch_size, n):
            if pos == n:
                perm, pos = rng.permutation(n), 0
            take = min(batch_size - len(idx), n - pos)
            idx.extend(perm[pos: pos + take])
            pos += take
        yield np.asarray(idx)


def train(cfg: ModelConfig, dataset: Dataset, val: Optional[Dataset] = None,
          on_step: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Optimise cross-entropy (+ weighted MI difference loss when GNDD and FDF
    are both on) with AdamW. ``val`` defaults to the training set."""
    if len(dataset) == 0:
        raise UsageError("training dataset is empty")
    cfg.validate()
    start = time.perf_counter()
    model = build_model(cfg)
    opt = AdamW(model.parameters(), lr=cfg.optim.lr, weight_decay=cfg.optim.weight_decay)
    xa, xb, y = dataset.images_a, dataset.images_b, dataset.labels.astype(np.int64)
    rng = np.random.default_rng([cfg.seed, 2])
    seg_hist, mi_hist, tot_hist = [], [], []
    for it, idx in enumerate(batch_order(len(dataset), cfg.optim.batch_size, cfg.optim.iterations, rng)):
        out = model.forward(xa[idx], xb[idx], training=True)
        seg = cross_entropy(out.logits, y[idx])
        total = seg
        mi_val = 0.0
        if out.mi is not None:
            mi_val = out.mi.item()
            total = seg + out.mi * cfg.fdf.mi_weight
        loss = total.item()
        if not np.isfinite(loss):
            raise DivergenceError(it)
        opt.zero_grad()
        total.backward()
        opt.step()
        seg_hist.append(seg.item())
        mi_hist.append(mi_val)
        tot_hist.append(loss)
        if on_step is not None:
            on_step(it, loss)
        if it % 100 == 0:
            log.debug("iter %d loss %.5f (seg %.5f, mi %.5f)", it, loss, seg_hist[-1], mi_val)
    counts = evaluate_counts(model, val if val is not None else dataset)
    report = TrainReport(
        seg_loss=seg_hist,
        mi_loss=mi_hist,
        total_loss=tot_hist,
        metrics=compute_metrics(counts),
        seed=cfg.seed,
        config=cfg.to_dict(),
        forward_passes=model.schedule.f_t,
        wall_time=time.perf_counter() - start,
        counts=counts,
    )
    return TrainResult(model, report)


def evaluate_counts(model: ChangeDetector, dataset: Dataset, batch_size: int = 16) -> ConfusionCounts:
    """Micro-summed confusion counts over ``dataset`` in eval mode."""
    h, w = dataset.image_size
    if h % 32 or w % 32:
        raise ShapeError(f"dataset images are {h}x{w}; the model needs multiples of 32")
    xa, xb = dataset.images_a, dataset.images_b
    total = ConfusionCounts()
    for s in range(0, len(dataset), batch_size):
        pred = model.predict(xa[s: s + batch_size], xb[s: s + batch_size])
        for p, g in zip(pred, dataset.labels[s: s + batch_size]):
            total = total + confusion(p, g)
    return total


def evaluate(model: ChangeDetector, dataset: Dataset) -> MetricsReport:
    return compute_metrics(evaluate_counts(model, dataset))
