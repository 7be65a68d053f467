"""Desk-scale siamese change-detection network.

Topology: shared encoder -> GNDD -> three difference forms per scale ->
GAM over their concatenation -> top-down FPN with DFC before each 2x
upsampling -> small conv decoder -> 2-class logits at input size.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..core import Tensor, absolute, bilinear_upsample_x2, concat, mul, relu, upsample_to
from ..core import getitem
from ..core.nn import BatchNorm2d, Conv2d, Module
from ..dfc import DfcParams, dfc
from ..errors import ConfigError, ShapeError
from ..fdf import GamParams, HistogramMI, gam, mi_loss
from ..gndd import TIME_LABELS, NoiseSchedule, disturb
from .config import ModelConfig

N_SCALES = 4
ENCODER_OUT_ACT = False


class ConvBNReLU(Module):
    def __init__(self, cin, cout, rng, stride=1, act=True):
        self.conv = Conv2d(cin, cout, 3, rng, stride=stride, bias=False, init="kaiming")
        self.bn = BatchNorm2d(cout)
        self.act = act

    def __call__(self, x, training):
        y = self.bn(self.conv(x), training)
        return relu(y) if self.act else y


class Encoder(Module):
    """Stride-2 stem followed by four stride-2 stages; returns the four stage
    outputs at 1/4, 1/8, 1/16 and 1/32 of the input size.

    Stage outputs stop at batch norm (no ReLU), so per-image feature means sit
    near zero and the mean term of the domain noise stays small."""

    def __init__(self, channels, rng):
        self.stem = ConvBNReLU(3, channels[0], rng, stride=2)
        self.stages = []
        cin = channels[0]
        for cout in channels:
            self.stages.append([ConvBNReLU(cin, cout, rng, stride=2), ConvBNReLU(cout, cout, rng, act=ENCODER_OUT_ACT)])
            cin = cout
        self.blocks = [m for pair in self.stages for m in pair]

    def __call__(self, x, training):
        x = self.stem(x, training)
        feats = []
        for down, refine in self.stages:
            x = refine(down(x, training), training)
            feats.append(x)
        return feats


@dataclass
class ForwardOutput:
    logits: Tensor
    mi: Optional[Tensor]
    features_a: List[Tensor]
    features_b: List[Tensor]
    noisy_a: List[Tensor]
    noisy_b: List[Tensor]


class ChangeDetector(Module):
    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 1])
        ch, d = cfg.channels, cfg.fpn_dim
        self.encoder = Encoder(ch, rng)
        self.fuse = [Conv2d(2 * c, c, 1, rng) for c in ch]
        self.gam = (
            [GamParams.init(3 * c, rng, r=cfg.fdf.gam.r, kernel=cfg.fdf.gam.kernel, raw_gates=cfg.fdf.gam.raw_gates)
             for c in ch]
            if cfg.fdf.enabled else []
        )
        self.lateral = [Conv2d(3 * c, d, 1, rng) for c in ch]
        self.dfc = [DfcParams.init(d, rng) for _ in range(N_SCALES - 1)] if cfg.dfc.enabled else []
        self.head1 = Conv2d(d, d, 3, rng, init="kaiming")
        self.head2 = Conv2d(d, d, 3, rng, init="kaiming")
        self.classifier = Conv2d(d, 2, 1, rng)
        self.classifier.weight.data = self.classifier.weight.data * 0.1
        self.schedule = NoiseSchedule(f_t=0, f_T=cfg.optim.iterations, lam=cfg.gndd.lam)
        self.noise_rng = np.random.default_rng(cfg.gndd.seed)
        self.mi_cfg = HistogramMI(bins=cfg.fdf.bins, mode="soft")

    # one forward pass -------------------------------------------------------
    def difference_stack(self, fa: Tensor, fb: Tensor, s: int) -> Tensor:
        """Channel concatenation of |A - B|, A * B and a 1x1 projection of
        [A, B]; 3C channels."""
        proj = self.fuse[s](concat([fa, fb], axis=1))
        return concat([absolute(fa - fb), mul(fa, fb), proj], axis=1)

    def forward(self, img_a, img_b, training: bool = False) -> ForwardOutput:
        img_a, img_b = np.asarray(img_a, dtype=np.float64), np.asarray(img_b, dtype=np.float64)
        if img_a.shape != img_b.shape or img_a.ndim != 4 or img_a.shape[1] != 3:
            raise ShapeError(f"expected two (n, 3, h, w) batches, got {img_a.shape} and {img_b.shape}")
        n, _, h, w = img_a.shape
        if h % 32 or w % 32:
            raise ShapeError(f"input height/width (axes 2, 3) must be multiples of 32, got {h}x{w}")
        feats = self.encoder(Tensor(np.concatenate([img_a, img_b])), training)
        fa = [getitem(f, slice(0, n)) for f in feats]
        fb = [getitem(f, slice(n, 2 * n)) for f in feats]

        weight = self.schedule.step() if training else 0.0
        na, nb = fa, fb
        if self.cfg.gndd.enabled and training:
            na = [disturb(f, TIME_LABELS[0], self.schedule, self.noise_rng, True, s, weight) for s, f in enumerate(fa)]
            nb = [disturb(f, TIME_LABELS[1], self.schedule, self.noise_rng, True, s, weight) for s, f in enumerate(fb)]

        mi = None
        if training and self.cfg.mi_active:
            mi = self.mi_term(fa[-1], fb[-1], na[-1], nb[-1])

        lat = []
        for s in range(N_SCALES):
            stack = self.difference_stack(na[s], nb[s], s)
            if self.gam:
                stack = gam(stack, self.gam[s], training)
            lat.append(self.lateral[s](stack))

        p = lat[-1]
        for s in range(N_SCALES - 2, -1, -1):
            coarse = dfc(p, self.dfc[s]) if self.dfc else p
            p = lat[s] + bilinear_upsample_x2(coarse)

        x = relu(self.head1(p))
        x = relu(self.head2(x))
        logits = upsample_to(self.classifier(x), (h, w))
        return ForwardOutput(logits, mi, fa, fb, na, nb)

    __call__ = forward

    def mi_term(self, fa, fb, na, nb) -> Tensor:
        """Batch mean of the MI difference loss on the first ``mi_channels``
        channels of the coarsest scale, computed per image."""
        k = min(self.cfg.fdf.mi_channels, fa.shape[1])
        terms = []
        for i in range(fa.shape[0]):
            sl = (slice(i, i + 1), slice(0, k))
            terms.append(mi_loss(getitem(fa, sl), getitem(fb, sl), getitem(na, sl), getitem(nb, sl),
                                 self.mi_cfg, training=True))
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total * (1.0 / len(terms))

    def predict(self, img_a, img_b) -> np.ndarray:
        """Argmax change mask (n, h, w) in eval mode."""
        logits = self.forward(img_a, img_b, training=False).logits.data
        return (logits[:, 1] > logits[:, 0]).astype(np.uint8)


def build_model(cfg: ModelConfig) -> ChangeDetector:
    try:
        return ChangeDetector(cfg)
    except ConfigError:
        raise
    except (ValueError, ShapeError) as exc:
        raise ConfigError(f"inconsistent model configuration: {exc}") from exc
