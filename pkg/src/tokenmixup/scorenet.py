"""Per-sample difficulty from a small auxiliary classifier on intermediate tokens."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ops
from .numerics.tensor import Tensor, stop_gradient


def init_scorenet(cfg, rng: np.random.Generator) -> dict[str, np.ndarray]:
    from .transformer import _trunc_normal

    d, c = cfg.dim, cfg.num_classes
    return {
        "scorenet.w1": _trunc_normal(rng, (d, d)),
        "scorenet.b1": np.zeros(d, np.float32),
        "scorenet.w2": _trunc_normal(rng, (d, c)),
        "scorenet.b2": np.zeros(c, np.float32),
    }


@dataclass(frozen=True)
class EasySelection:
    indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.indices)


def scorenet_forward(model, x: Tensor) -> Tensor:
    """Mean-pooled, detached tokens -> hidden GELU layer of width d -> class logits."""
    pooled = ops.mean(stop_gradient(x), axis=1)
    hidden = ops.gelu(pooled @ model["scorenet.w1"] + model["scorenet.b1"])
    return hidden @ model["scorenet.w2"] + model["scorenet.b2"]


def difficulty(model, x: Tensor, y) -> Tensor:
    """Per-sample cross-entropy of the ScoreNet prediction; shape (b,)."""
    return ops.cross_entropy(scorenet_forward(model, x), y)


def select_easy(u, tau: float) -> EasySelection:
    """Indices with difficulty strictly below ``tau``."""
    u = np.asarray(getattr(u, "data", u))
    return EasySelection(tuple(int(i) for i in np.flatnonzero(u < tau)))


def scorenet_aux_loss(model, x: Tensor, y) -> Tensor:
    return ops.mean(difficulty(model, x, y))
