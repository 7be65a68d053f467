"""Synthetic bi-temporal change-detection pairs and PNG dataset I/O.

Both times share a value-noise base texture and a list of planted shapes. Some
shapes exist only at time A (removed) or only at time B (added); the change
mask marks pixels whose top-most shape differs. Time B then receives a domain
shift (gain, bias, per-channel offset, sensor noise) that never touches the
mask, so shifted-but-unchanged pixels are pseudo changes by construction.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .errors import IntegrityError, ValidationError

NORM_MEAN = np.array([123.675, 116.28, 103.53])
NORM_STD = np.array([58.395, 57.12, 57.375])

Range = Tuple[float, float]


@dataclass
class SynthConfig:
    count: int = 8
    image_size: int = 64
    objects: Tuple[int, int] = (1, 4)
    object_size: Tuple[int, int] = (6, 20)
    gain: Range = (1.0, 1.0)
    bias: Range = (0.0, 0.0)
    season: Range = (0.0, 0.0)
    noise_sigma: float = 0.0
    change_prob: float = 0.6
    seed: int = 0

    def __post_init__(self):
        for name in ("objects", "object_size", "gain", "bias", "season"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"{name} range is not ordered: {lo} > {hi}")
            setattr(self, name, (lo, hi))
        if self.image_size < 16:
            raise ValidationError(f"image_size must be >= 16, got {self.image_size}")
        if self.count < 0 or self.objects[0] < 0 or self.object_size[0] < 1:
            raise ValidationError("count, object count and object size must be non-negative / positive")
        if self.object_size[1] > self.image_size:
            raise ValidationError("object_size upper bound exceeds image_size")
        if self.gain[0] <= 0 or self.noise_sigma < 0 or not 0 <= self.change_prob <= 1:
            raise ValidationError("gain must be > 0, noise_sigma >= 0, change_prob in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown synth keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class PlantedShape:
    kind: str  # "rect" | "ellipse"
    cy: float
    cx: float
    half_h: float
    half_w: float
    color: Tuple[float, float, float]
    present: str  # "AB" | "A" | "B"

    def covers(self, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        dy, dx = (yy - self.cy) / self.half_h, (xx - self.cx) / self.half_w
        if self.kind == "rect":
            return (np.abs(dy) <= 1.0) & (np.abs(dx) <= 1.0)
        return dy * dy + dx * dx <= 1.0


@dataclass
class SamplePair:
    img_a: np.ndarray  # (h, w, 3) uint8
    img_b: np.ndarray
    mask: np.ndarray  # (h, w) uint8 in {0, 1}
    shift_meta: dict = field(default_factory=dict)
    shapes: List[PlantedShape] = field(default_factory=list)


def _value_noise(rng, size, cells):
    grid = rng.uniform(-1.0, 1.0, size=(cells + 1, cells + 1))
    pos = np.linspace(0.0, cells, size)
    rows = np.stack([np.interp(pos, np.arange(cells + 1), grid[:, j]) for j in range(cells + 1)], axis=1)
    return np.stack([np.interp(pos, np.arange(cells + 1), r) for r in rows])


def _base_texture(rng, size):
    base = rng.uniform(70.0, 170.0, size=3)
    tex = 0.7 * _value_noise(rng, size, 4) + 0.3 * _value_noise(rng, size, 12)
    tint = rng.uniform(0.6, 1.0, size=3)
    return base[None, None, :] + 35.0 * tex[:, :, None] * tint[None, None, :]


def _plant_shapes(cfg: SynthConfig, rng) -> List[PlantedShape]:
    n = int(rng.integers(cfg.objects[0], cfg.objects[1] + 1))
    shapes = []
    for k in range(n):
        side_h = rng.uniform(*cfg.object_size)
        side_w = rng.uniform(*cfg.object_size)
        cy = rng.uniform(side_h / 2, cfg.image_size - side_h / 2)
        cx = rng.uniform(side_w / 2, cfg.image_size - side_w / 2)
        kind = "rect" if rng.random() < 0.5 else "ellipse"
        color = tuple(float(v) for v in rng.uniform(0.0, 255.0, size=3))
        changed = k == 0 or rng.random() < cfg.change_prob
        present = ("A" if rng.random() < 0.5 else "B") if changed else "AB"
        shapes.append(PlantedShape(kind, cy, cx, side_h / 2, side_w / 2, color, present))
    return shapes


def top_shape_map(shapes: Sequence[PlantedShape], t: str, size: int) -> np.ndarray:
    """Index of the top-most shape present at time ``t`` per pixel, -1 if none."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    top = np.full((size, size), -1, dtype=np.int64)
    for i, s in enumerate(shapes):
        if t in s.present:
            top[s.covers(yy, xx)] = i
    return top


def _render(texture, shapes, top):
    img = texture.copy()
    shade = (texture - texture.mean()) * 0.3
    for i, s in enumerate(shapes):
        sel = top == i
        img[sel] = np.asarray(s.color)[None, :] + shade[sel]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def apply_shift(img: np.ndarray, gain: float, bias: float, offsets, noise_sigma: float, rng) -> np.ndarray:
    out = gain * img.astype(np.float64) + bias + np.asarray(offsets, dtype=np.float64)[None, None, :]
    if noise_sigma > 0:
        out = out + noise_sigma * rng.standard_normal(img.shape)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def generate_pair(cfg: SynthConfig, rng: np.random.Generator) -> SamplePair:
    size = cfg.image_size
    texture = _base_texture(rng, size)
    shapes = _plant_shapes(cfg, rng)
    top_a = top_shape_map(shapes, "A", size)
    top_b = top_shape_map(shapes, "B", size)
    img_a = _render(texture, shapes, top_a)
    pre_b = _render(texture, shapes, top_b)
    gain = float(rng.uniform(*cfg.gain))
    bias = float(rng.uniform(*cfg.bias))
    offsets = [float(v) for v in rng.uniform(*cfg.season, size=3)]
    img_b = apply_shift(pre_b, gain, bias, offsets, cfg.noise_sigma, rng)
    meta = {"gain": gain, "bias": bias, "channel_offsets": offsets, "noise_sigma": cfg.noise_sigma}
    return SamplePair(img_a, img_b, (top_a != top_b).astype(np.uint8), meta, shapes)


def generate_dataset(cfg: SynthConfig) -> List[SamplePair]:
    """``cfg.count`` pairs; pair ``i`` uses its own generator seeded by
    ``(cfg.seed, i)`` so pairs are independent of generation order."""
    return [generate_pair(cfg, np.random.default_rng([cfg.seed, i])) for i in range(cfg.count)]


# --- dataset I/O -------------------------------------------------------------
def normalize(img: np.ndarray) -> np.ndarray:
    """(..., h, w, 3) uint8 -> (..., 3, h, w) float64 with per-channel
    mean/std normalization."""
    x = (img.astype(np.float64) - NORM_MEAN) / NORM_STD
    return np.moveaxis(x, -1, -3)


@dataclass
class Dataset:
    ids: List[str]
    raw_a: np.ndarray  # (n, h, w, 3) uint8
    raw_b: np.ndarray
    labels: np.ndarray  # (n, h, w) uint8 {0, 1}
    meta: List[dict] = field(default_factory=list)

    def __len__(self):
        return len(self.ids)

    @property
    def image_size(self) -> Tuple[int, int]:
        return self.labels.shape[1:]

    @property
    def images_a(self) -> np.ndarray:
        return normalize(self.raw_a)

    @property
    def images_b(self) -> np.ndarray:
        return normalize(self.raw_b)

    def subset(self, idx) -> "Dataset":
        idx = list(idx)
        meta = [self.meta[i] for i in idx] if self.meta else []
        return Dataset([self.ids[i] for i in idx], self.raw_a[idx], self.raw_b[idx], self.labels[idx], meta)

    def fingerprint(self) -> str:
        """Content hash of ids, images and labels (independent of location)."""
        h = hashlib.sha256()
        h.update("\n".join(self.ids).encode())
        for arr in (self.raw_a, self.raw_b, self.labels):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    @classmethod
    def from_pairs(cls, pairs: Sequence[SamplePair], ids: Optional[Sequence[str]] = None) -> "Dataset":
        ids = list(ids) if ids is not None else [f"{i:05d}" for i in range(len(pairs))]
        return cls(
            ids,
            np.stack([p.img_a for p in pairs]),
            np.stack([p.img_b for p in pairs]),
            np.stack([p.mask for p in pairs]).astype(np.uint8),
            [dict(p.shift_meta) for p in pairs],
        )


def write_dataset(pairs: Sequence[SamplePair], directory, ids: Optional[Sequence[str]] = None) -> Path:
    root = Path(directory)
    ids = list(ids) if ids is not None else [f"{i:05d}" for i in range(len(pairs))]
    for sub in ("A", "B", "label"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    with open(root / "meta.jsonl", "w", encoding="utf-8") as fh:
        for pid, p in zip(ids, pairs):
            Image.fromarray(p.img_a, "RGB").save(root / "A" / f"{pid}.png")
            Image.fromarray(p.img_b, "RGB").save(root / "B" / f"{pid}.png")
            Image.fromarray((p.mask * 255).astype(np.uint8), "L").save(root / "label" / f"{pid}.png")
            fh.write(json.dumps({"id": pid, **p.shift_meta}, sort_keys=True) + "\n")
    return root


def read_dataset(directory) -> Dataset:
    root = Path(directory)
    stems = {sub: {p.stem for p in (root / sub).glob("*.png")} for sub in ("A", "B", "label")}
    all_ids = set().union(*stems.values())
    for pid in sorted(all_ids):
        missing = [sub for sub, have in stems.items() if pid not in have]
        if missing:
            raise IntegrityError(f"sample {pid!r} is missing its {'/'.join(missing)} file")
    ids = sorted(all_ids)
    if not ids:
        raise IntegrityError(f"no samples found under {root}")
    raw_a = np.stack([np.asarray(Image.open(root / "A" / f"{i}.png").convert("RGB")) for i in ids])
    raw_b = np.stack([np.asarray(Image.open(root / "B" / f"{i}.png").convert("RGB")) for i in ids])
    masks = np.stack([np.asarray(Image.open(root / "label" / f"{i}.png").convert("L")) for i in ids])
    if not np.isin(masks, (0, 255)).all():
        raise IntegrityError("label images must contain only 0 and 255")
    meta = []
    meta_path = root / "meta.jsonl"
    if meta_path.exists():
        by_id = {}
        for line in meta_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                by_id[rec.pop("id")] = rec
        meta = [by_id.get(i, {}) for i in ids]
    return Dataset(ids, raw_a, raw_b, (masks // 255).astype(np.uint8), meta)


def synth_config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
