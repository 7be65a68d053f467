"""Finite-difference sweep over every differentiable op the model uses."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List

import numpy as np

from ..core import RunningStats, Tensor, batch_norm, bilinear_upsample_x2, conv2d, finite_difference_check, softmax
from ..core import sum as tsum
from ..dfc import DfcParams, dem, dfc, gem
from ..fdf import GamParams, HistogramMI, gam, mi_loss

TOLERANCE = 1e-4


@dataclass
class GradCase:
    name: str
    build: Callable[[np.random.Generator], tuple]  # -> (f, x)


def _weighted(rng, shape):
    # a random projection keeps sum-invariant ops (softmax) from having zero gradient
    w = Tensor(rng.standard_normal(shape))
    return lambda out: tsum(out * w)


def _conv_input(rng):
    w = Tensor(rng.standard_normal((3, 2, 3, 3)))
    b = Tensor(rng.standard_normal(3))
    proj = _weighted(rng, (1, 3, 3, 3))
    return lambda t: proj(conv2d(t, w, b, stride=2, padding=1)), rng.standard_normal((1, 2, 5, 5))


def _conv_weight(rng):
    x = Tensor(rng.standard_normal((2, 4, 4, 4)))
    proj = _weighted(rng, (2, 4, 4, 4))
    return lambda t: proj(conv2d(x, t, None, padding=1, groups=2)), rng.standard_normal((4, 2, 3, 3))


def _batch_norm(rng):
    gamma, beta = Tensor(rng.uniform(0.5, 1.5, 3)), Tensor(rng.standard_normal(3))
    proj = _weighted(rng, (4, 3, 2, 2))
    return (lambda t: proj(batch_norm(t, gamma, beta, True, running=RunningStats.fresh(3))),
            rng.standard_normal((4, 3, 2, 2)))


def _softmax(rng):
    proj = _weighted(rng, (2, 3, 5))
    return lambda t: proj(softmax(t, axis=-1)), rng.standard_normal((2, 3, 5))


def _upsample(rng):
    proj = _weighted(rng, (1, 2, 6, 8))
    return lambda t: proj(bilinear_upsample_x2(t)), rng.standard_normal((1, 2, 3, 4))


def _dfc_case(op):
    def build(rng):
        p = DfcParams.init(2, rng)
        proj = _weighted(rng, (1, 2, 3, 3))
        return lambda t: proj(op(t, p)), rng.standard_normal((1, 2, 3, 3))
    return build


def _gam(rng):
    p = GamParams.init(4, rng, r=2, kernel=3)
    proj = _weighted(rng, (1, 4, 3, 3))
    return lambda t: proj(gam(t, p, training=True)), rng.standard_normal((1, 4, 3, 3))


def _mi_loss(rng):
    cfg = HistogramMI(bins=8, range=(-4.0, 4.0), mode="soft")
    fb = rng.standard_normal(96)
    na = Tensor(rng.standard_normal(96) * 1.5)
    nb = Tensor(fb + rng.standard_normal(96) * 1.5)
    fa = 0.8 * fb + 0.6 * rng.standard_normal(96)
    return lambda t: mi_loss(t, Tensor(fb), na, nb, cfg, training=True), fa


CASES: List[GradCase] = [
    GradCase("conv2d (input)", _conv_input),
    GradCase("conv2d (weight)", _conv_weight),
    GradCase("batch_norm", _batch_norm),
    GradCase("softmax", _softmax),
    GradCase("bilinear_upsample_x2", _upsample),
    GradCase("dem", _dfc_case(dem)),
    GradCase("gem", _dfc_case(gem)),
    GradCase("dfc", _dfc_case(dfc)),
    GradCase("gam", _gam),
    GradCase("mi_loss (soft)", _mi_loss),
]


@dataclass
class GradSuiteResult:
    errors: Dict[str, List[float]]
    seconds: float
    tolerance: float = TOLERANCE

    def worst(self) -> Dict[str, float]:
        return {k: max(v) for k, v in self.errors.items()}

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for v in self.errors.values() for e in v)

    def to_dict(self) -> dict:
        return {"tolerance": self.tolerance, "seeds": len(next(iter(self.errors.values()), [])),
                "max_relative_error": self.worst(), "passed": self.passed}


def run_gradient_suite(seeds: Iterable[int] = range(20), step: float = 1e-6) -> GradSuiteResult:
    seeds = list(seeds)
    start = time.perf_counter()
    errors = {}
    for case in CASES:
        errs = []
        for s in seeds:
            f, x = case.build(np.random.default_rng([s, 7]))
            errs.append(finite_difference_check(f, Tensor(x), step=step))
        errors[case.name] = errs
    return GradSuiteResult(errors, time.perf_counter() - start)
