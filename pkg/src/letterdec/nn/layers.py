"""Stateful layer wrappers holding parameters and batch-norm buffers."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor


class Module:
    """Base class: parameters are :class:`Tensor` attributes with ``requires_grad``.

    Children are discovered from attributes (modules, or lists of modules) in
    assignment order, which fixes the parameter ordering used by optimizers
    and checkpoints.
    """

    training: bool = True

    def forward(self, x: Tensor) -> Tensor:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in getattr(self, "_buffers", ()):
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(prefix + name + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for m in self.modules():
            for name, value in vars(m).items():
                if isinstance(value, Tensor):
                    value.data = value.data.astype(dtype)
            for name in getattr(m, "_buffers", ()):
                setattr(m, name, getattr(m, name).astype(dtype))
        return self

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


class Conv2d(Module):
    def __init__(self, d_in: int, d_out: int, kernel: tuple[int, int], rng: np.random.Generator,
                 groups: int = 1, padding: str = "valid", bias: bool = False, dtype=np.float32):
        if d_in % groups or d_out % groups:
            raise ValueError(f"depths {d_in}->{d_out} not divisible by groups={groups}")
        kh, kw = kernel
        if kh < 1 or kw < 1:
            raise ValueError(f"kernel lengths must be >= 1, got {kernel}")
        self.d_in, self.d_out, self.kernel = d_in, d_out, (kh, kw)
        self.groups, self.padding = groups, padding
        fan_in = d_in // groups * kh * kw
        self.weight = _uniform(rng, (d_out, d_in // groups, kh, kw), fan_in, dtype)
        self.bias = _uniform(rng, (d_out,), fan_in, dtype) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, groups=self.groups, padding=self.padding)


class BatchNorm2d(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, depth: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        self.gamma = Tensor(np.ones(depth, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(depth, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(depth, dtype=dtype)
        self.running_var = np.ones(depth, dtype=dtype)
        self.momentum, self.eps = momentum, eps

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            training=self.training, momentum=self.momentum, eps=self.eps)


class ELU(Module):
    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def forward(self, x):
        return F.elu(x, self.alpha)


class AvgPool(Module):
    def __init__(self, kernel_t: int, stride_t: int | None = None):
        self.kernel_t = kernel_t
        self.stride_t = kernel_t if stride_t is None else stride_t

    def forward(self, x):
        return F.pool_avg(x, self.kernel_t, self.stride_t)


class Dropout(Module):
    def __init__(self, rate: float, seed: int = 0):
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(seed)

    def reseed(self, seed) -> None:
        self.rng = np.random.default_rng(seed)

    def forward(self, x):
        return F.dropout(x, self.rate, self.training, self.rng)


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32):
        self.weight = _uniform(rng, (n_in, n_out), n_in, dtype)
        self.bias = _uniform(rng, (n_out,), n_in, dtype)

    def forward(self, x):
        return F.dense(x, self.weight, self.bias)


class Flatten(Module):
    def forward(self, x):
        return F.flatten(x)


class Sequential(Module):
    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]
