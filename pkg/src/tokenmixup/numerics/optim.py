"""Plain SGD with heavy-ball momentum."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import UsageError
from .tensor import Tensor


class SGD:
    def __init__(self, params: Sequence[Tensor], lr: float, momentum: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        """``v <- momentum * v + grad``; ``p <- p - lr * v``; then clear grads."""
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise UsageError(f"parameter {i} {p.shape} has no gradient")
        for p, v in zip(self.params, self.velocity):
            v *= self.momentum
            v += p.grad
            p.data = p.data - np.asarray(self.lr, dtype=p.dtype) * v
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_dict(self) -> dict:
        return {"lr": self.lr, "momentum": self.momentum, "velocity": [v.copy() for v in self.velocity]}


def sgd_step(params: Sequence[Tensor], lr: float, momentum: float = 0.0, state: SGD | None = None) -> SGD:
    """Functional form: one update; pass the returned state back in to keep momentum."""
    state = state or SGD(params, lr, momentum)
    state.lr, state.momentum = lr, momentum
    state.step()
    return state
