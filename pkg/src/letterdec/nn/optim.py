"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functional import DivergenceError
from .tensor import Tensor


@dataclass
class OptimizerState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[Tensor], grads: list[np.ndarray | None], state: OptimizerState) -> None:
    """Update ``params`` in place from ``grads``.

    Raises :class:`DivergenceError` if any gradient is non-finite; nothing is
    modified in that case.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    for p, g in zip(params, grads):
        if g is not None and g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if g is not None and not np.isfinite(g).all():
            raise DivergenceError("non-finite gradient")
    state.step += 1
    b1, b2 = state.betas
    t = state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (state.lr / c1) * m / (np.sqrt(v / c2) + state.eps)
        p.data -= update.astype(p.dtype, copy=False)


class Adam:
    """Thin wrapper binding a parameter list to an :class:`OptimizerState`."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = OptimizerState(lr=lr, betas=tuple(betas), eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)
