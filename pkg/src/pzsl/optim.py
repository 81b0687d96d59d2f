"""SGD with classical momentum.

Velocity buffers start at zero when the optimizer is created (training
start). A non-finite gradient raises NumericError so the training loop can
abort the epoch with context.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .tensor import Tensor


class SGDMomentum:
    """v <- momentum * v + g; p <- p - lr * v, elementwise per parameter."""

    def __init__(self, params: list[Tensor], lr: float, momentum: float = 0.9):
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise NumericError("non-finite gradient in optimizer step")
            v *= self.momentum
            v += p.grad
            p.data = p.data - self.lr * v


def sgd_momentum_step(
    params: list[Tensor],
    grads: list[np.ndarray],
    velocity: list[np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    """Functional form of the update; mutates params and velocity in place."""
    for p, g, v in zip(params, grads, velocity):
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient in optimizer step")
        v *= momentum
        v += g
        p.data = p.data - lr * v
