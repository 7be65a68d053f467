"""Command-line entry point: ``bgfd {synth,train,eval,ablate,gradcheck}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import SynthConfig, generate_dataset, read_dataset, write_dataset
from .errors import BGFDError, UsageError
from .harness.config import ModelConfig, load_config
from .metrics import METRIC_KEYS

log = logging.getLogger("bgfd")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _config(args) -> ModelConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = cfg.gndd.seed = args.seed
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    cfg = _config(args)
    section = cfg.synth_test if args.split == "test" else cfg.synth
    fields = dict(section or {})
    if args.seed is not None:
        fields["seed"] = args.seed
    synth = SynthConfig.from_dict(fields)
    root = write_dataset(generate_dataset(synth), _out(args))
    print(f"wrote {synth.count} pairs to {root}")
    return 0


def _save_model(model, cfg: ModelConfig, path: Path) -> None:
    state = model.state_dict()
    state["__config__"] = np.frombuffer(json.dumps(cfg.to_dict(), sort_keys=True).encode(), dtype=np.uint8)
    state["__f_t__"] = np.array(model.schedule.f_t)
    np.savez(path, **state)


def load_model(path):
    from .harness.config import config_from_dict
    from .harness.model import build_model

    with np.load(path) as z:
        raw = json.loads(bytes(z["__config__"]).decode())
        model = build_model(config_from_dict(raw))
        model.load_state_dict({k: z[k] for k in z.files if not k.startswith("__")})
        model.schedule.f_t = int(z["__f_t__"])
    return model


def cmd_train(args) -> int:
    from .harness.train import train

    cfg = _config(args)
    if args.iterations is not None:
        cfg.optim.iterations = args.iterations
    data = read_dataset(_need(args.data, "--data"))
    val = read_dataset(args.val) if args.val else None
    out = _out(args)
    result = train(cfg, data, val=val)
    rep = result.report
    _dump(out / "report.json", rep.to_dict())
    _dump(out / "timing.json", {"wall_time": rep.wall_time})
    (out / "metrics.csv").write_text(rep.metrics.to_csv_row(), encoding="utf-8")
    with open(out / "loss.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "segmentation", "mi", "total"])
        for i, row in enumerate(zip(rep.seg_loss, rep.mi_loss, rep.total_loss)):
            writer.writerow([i, *(repr(v) for v in row)])
    _save_model(result.model, cfg, out / "model.npz")
    print(f"f1 {rep.metrics.f1:.4f}  iou {rep.metrics.iou:.4f}  ({len(rep.total_loss)} iterations)")
    return 0


def cmd_eval(args) -> int:
    from .harness.train import evaluate_counts
    from .metrics import compute_metrics

    model = load_model(_need(args.model, "--model"))
    counts = evaluate_counts(model, read_dataset(_need(args.data, "--data")))
    metrics = compute_metrics(counts)
    out = _out(args)
    _dump(out / "eval.json", {"metrics": metrics.as_dict(), "confusion": vars(counts), "fp_rate": round(counts.fp_rate, 6)})
    (out / "eval.csv").write_text(metrics.to_csv_row(), encoding="utf-8")
    print(" ".join(f"{k} {getattr(metrics, k):.4f}" for k in METRIC_KEYS))
    return 0


def cmd_ablate(args) -> int:
    from .harness.ablate import ablate, benchmark_datasets, write_ablation

    cfg = load_config(args.config)
    if args.iterations is not None:
        cfg.optim.iterations = args.iterations
    seeds = cfg.ablation.seeds
    if args.seed is not None:
        seeds = [args.seed + i for i in range(len(seeds))]
    if args.data:
        train_ds = read_dataset(args.data)
        test_ds = read_dataset(_need(args.test_data, "--test-data"))
        bench = {"train": {"count": len(train_ds), "sha256": train_ds.fingerprint()},
                 "test": {"count": len(test_ds), "sha256": test_ds.fingerprint()}}
    else:
        train_ds, test_ds, bench = benchmark_datasets(cfg)
    report = ablate(cfg, train_ds, test_ds, seeds=seeds,
                    on_run=lambda r: print(f"{r.row:<11} seed {r.seed}: f1 {r.metrics['f1']:.4f} "
                                           f"fp_rate {r.fp_rate:.5f}", flush=True))
    report.benchmark = bench
    out = _out(args)
    write_ablation(report, out)
    _dump(out / "timing.json", {"wall_time": report.wall_time})
    for entry in report.summary():
        print(f"{entry['row']:<11} mean f1 {entry['mean_f1']:.4f}  mean fp_rate {entry['mean_fp_rate']:.5f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .harness.gradsuite import run_gradient_suite

    start = args.seed or 0
    result = run_gradient_suite(range(start, start + args.seeds))
    for name, err in result.worst().items():
        print(f"{'ok  ' if err < result.tolerance else 'FAIL'} {name:<22} max rel err {err:.3e}")
    if args.out:
        out = _out(args)
        _dump(out / "gradcheck.json", result.to_dict())
    return 0 if result.passed else 1


def _need(value, flag):
    if not value:
        raise UsageError(f"{flag} is required for this command")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bgfd", description="Desk-scale change-detection toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="YAML or JSON config file (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--split", choices=("train", "test"), default="train",
                   help="use the synth (train) or synth.test section")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory (A/, B/, label/)")
    p.add_argument("--val", help="validation dataset directory (defaults to --data)")
    p.add_argument("--iterations", type=int, help="override optim.iterations")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="model.npz written by train")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the six-row ablation matrix")
    common(p)
    p.add_argument("--data", help="training dataset directory (default: built-in benchmark)")
    p.add_argument("--test-data", help="test dataset directory")
    p.add_argument("--iterations", type=int, help="override optim.iterations")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    common(p, out_required=False)
    p.add_argument("--seeds", type=int, default=20, help="number of seeds per op")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except BGFDError as exc:
        print(f"bgfd {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
