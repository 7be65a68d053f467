"""The six-row module ablation, trained over several seeds.

Rows toggle DFC, GNDD and FDF. Each (row, seed) run trains from scratch on
the same training set and is scored on a held-out test set whose
illumination shift lies outside the training range.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..data import Dataset, SynthConfig, generate_dataset
from ..errors import AblationRunError, BGFDError, UsageError
from ..metrics import METRIC_KEYS, compute_metrics
from .config import ModelConfig
from .train import evaluate_counts, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationRow:
    id: str
    dfc: bool
    gndd: bool
    fdf: bool


ROWS = (
    AblationRow("baseline", False, False, False),
    AblationRow("+DFC", True, False, False),
    AblationRow("+GNDD", False, True, False),
    AblationRow("+GNDD+FDF", False, True, True),
    AblationRow("+DFC+GNDD", True, True, False),
    AblationRow("full", True, True, True),
)

# Training sees mild illumination/season variation; the test split is
# brighter and more strongly biased than anything seen in training.
BENCH_TRAIN = dict(count=200, gain=(0.85, 1.15), bias=(-10.0, 10.0), season=(-8.0, 8.0), noise_sigma=2.0, seed=100)
BENCH_TEST = dict(count=50, gain=(1.3, 1.5), bias=(15.0, 30.0), season=(-8.0, 8.0), noise_sigma=2.0, seed=200)


@dataclass
class RunRecord:
    row: str
    seed: int
    fingerprint: str
    metrics: Dict[str, float]
    fp_rate: float
    counts: Dict[str, int]
    final_loss: float

    def to_dict(self) -> dict:
        return {"row": self.row, "seed": self.seed, "fingerprint": self.fingerprint,
                "metrics": self.metrics, "fp_rate": round(self.fp_rate, 6),
                "counts": self.counts, "final_loss": self.final_loss}


@dataclass
class AblationReport:
    runs: List[RunRecord]
    seeds: List[int]
    wall_time: float = 0.0
    benchmark: dict = field(default_factory=dict)

    def summary(self) -> List[dict]:
        out = []
        for row in ROWS:
            recs = [r for r in self.runs if r.row == row.id]
            if not recs:
                continue
            entry = {"row": row.id, "dfc": row.dfc, "gndd": row.gndd, "fdf": row.fdf, "n": len(recs)}
            for k in METRIC_KEYS:
                entry[f"mean_{k}"] = round(float(np.mean([r.metrics[k] for r in recs])), 6)
            entry["mean_fp_rate"] = round(float(np.mean([r.fp_rate for r in recs])), 6)
            entry["std_f1"] = round(float(np.std([r.metrics["f1"] for r in recs])), 6)
            out.append(entry)
        return out

    def row_mean(self, row: str, key: str) -> float:
        for entry in self.summary():
            if entry["row"] == row:
                return entry[f"mean_{key}"]
        raise KeyError(row)

    def to_dict(self) -> dict:
        return {"seeds": self.seeds, "benchmark": self.benchmark, "summary": self.summary(),
                "runs": [r.to_dict() for r in self.runs]}


def benchmark_datasets(cfg: Optional[ModelConfig] = None):
    """Train/test synthetic splits from ``cfg.synth`` / ``cfg.synth_test``,
    falling back to the built-in shifted benchmark."""
    train_fields = dict(BENCH_TRAIN, **((cfg.synth or {}) if cfg else {}))
    test_fields = dict(BENCH_TEST, **((cfg.synth_test or {}) if cfg else {}))
    tr, te = SynthConfig.from_dict(train_fields), SynthConfig.from_dict(test_fields)
    return Dataset.from_pairs(generate_dataset(tr)), Dataset.from_pairs(generate_dataset(te)), {
        "train": {k: list(v) if isinstance(v, tuple) else v for k, v in vars(tr).items()},
        "test": {k: list(v) if isinstance(v, tuple) else v for k, v in vars(te).items()},
    }


def ablate(cfg: ModelConfig, dataset_train: Dataset, dataset_test: Dataset,
           seeds: Optional[Sequence[int]] = None, rows: Sequence[AblationRow] = ROWS,
           on_run: Optional[Callable[[RunRecord], None]] = None) -> AblationReport:
    seeds = list(cfg.ablation.seeds if seeds is None else seeds)
    if not seeds:
        raise UsageError("ablation needs at least one seed")
    start = time.perf_counter()
    runs = []
    for row in rows:
        for seed in seeds:
            run_cfg = cfg.with_toggles(dfc=row.dfc, gndd=row.gndd, fdf=row.fdf, seed=seed)
            try:
                result = train(run_cfg, dataset_train, val=dataset_test)
            except BGFDError as exc:
                raise AblationRunError(row.id, seed, exc) from exc
            counts = result.report.counts
            rec = RunRecord(row.id, seed, run_cfg.fingerprint(), compute_metrics(counts).as_dict(),
                            counts.fp_rate, vars(counts).copy(), result.report.total_loss[-1])
            log.info("%s seed %d: f1 %.4f fp_rate %.5f", row.id, seed, rec.metrics["f1"], rec.fp_rate)
            runs.append(rec)
            if on_run is not None:
                on_run(rec)
    return AblationReport(runs, seeds, time.perf_counter() - start)


def write_ablation(report: AblationReport, out_dir) -> Dict[str, Path]:
    """ablation.json (full report), ablation.csv (per-row means),
    ablation_runs.csv (one line per run) and ablation_plot.csv (long
    row x metric table for plotting)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / f for k, f in (("json", "ablation.json"), ("csv", "ablation.csv"),
                                     ("runs", "ablation_runs.csv"), ("plot", "ablation_plot.csv"))}
    paths["json"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    summary = report.summary()
    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(summary)
    with open(paths["runs"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "seed", "fingerprint", *METRIC_KEYS, "fp_rate"])
        for r in report.runs:
            writer.writerow([r.row, r.seed, r.fingerprint, *(f"{r.metrics[k]:.6f}" for k in METRIC_KEYS),
                             f"{r.fp_rate:.6f}"])
    with open(paths["plot"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "metric", "mean"])
        for entry in summary:
            for k in (*METRIC_KEYS, "fp_rate"):
                writer.writerow([entry["row"], k, f"{entry[f'mean_{k}']:.6f}"])
    return paths
