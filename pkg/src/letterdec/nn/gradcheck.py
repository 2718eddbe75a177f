"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def gradient_check(fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-5,
                   n_coords: int = 200, seed: int = 0) -> float:
    """Return the max relative error between backward and central differences.

    ``fn`` must rebuild the graph from ``tensors`` on every call and return a
    scalar. Up to ``n_coords`` coordinates are sampled uniformly over all
    tensors (all of them when fewer exist). The relative error of one
    coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    for t in tensors:
        t.grad = None
    out = fn()
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    sizes = np.array([t.size for t in tensors])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    flat = np.arange(total) if total <= n_coords else np.sort(rng.choice(total, n_coords, replace=False))
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for k in flat:
        ti = int(np.searchsorted(offsets, k, side="right") - 1)
        idx = np.unravel_index(int(k - offsets[ti]), tensors[ti].shape)
        data = tensors[ti].data
        orig = data[idx]
        data[idx] = orig + eps
        f_plus = float(fn().data)
        data[idx] = orig - eps
        f_minus = float(fn().data)
        data[idx] = orig
        numeric = (f_plus - f_minus) / (2 * eps)
        a = float(analytic[ti][idx])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
