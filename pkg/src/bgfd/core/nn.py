"""Parameter containers: a small Module base plus the layers the model uses."""
from __future__ import annotations

import math

import numpy as np

from . import ops
from .tensor import Tensor, parameter


class Module:
    """Walks attributes to collect parameters and running statistics."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, ops.RunningStats):
                yield full + ".mean", value, "mean"
                yield full + ".var", value, "var"
            elif isinstance(value, Module):
                yield from value.named_buffers(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{full}.{i}.")

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        for name, stats, attr in self.named_buffers():
            state[name] = getattr(stats, attr).copy()
        return state

    def load_state_dict(self, state: dict):
        for name, p in self.named_parameters():
            p.data = np.array(state[name], dtype=np.float64).reshape(p.shape)
        for name, stats, attr in self.named_buffers():
            setattr(stats, attr, np.array(state[name], dtype=np.float64))


def uniform_fan_in(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(self, cin, cout, k, rng, stride=1, padding=None, groups=1, bias=True, init="fan_in"):
        shape = (cout, cin // groups, k, k)
        if init == "kaiming":
            w = rng.standard_normal(shape) * math.sqrt(2.0 / (shape[1] * k * k))
        else:
            w = uniform_fan_in(rng, shape)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(cout)) if bias else None
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.groups = groups

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class BatchNorm2d(Module):
    def __init__(self, channels, eps=1e-5, momentum=0.1):
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))
        self.stats = ops.RunningStats.fresh(channels, momentum)
        self.eps = eps

    def __call__(self, x, training=True):
        return ops.batch_norm(x, self.gamma, self.beta, training, self.eps, self.stats)
