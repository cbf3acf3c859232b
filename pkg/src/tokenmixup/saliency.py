"""Token saliency estimators and sharpness statistics for saliency maps."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import UsageError
from .numerics import ops
from .numerics.tensor import Tensor, grad, stop_gradient


class SaliencySource(str, enum.Enum):
    ATTENTION_ROLLOUT = "attention_rollout"
    GRADIENT = "gradient"
    RANDOM = "random"


@dataclass
class SaliencyMap:
    scores: np.ndarray  # (b, n), rows sum to 1
    source: SaliencySource = SaliencySource.ATTENTION_ROLLOUT

    def __array__(self, dtype=None, copy=None):
        return self.scores if dtype is None else self.scores.astype(dtype)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.scores.shape


def _as_maps(records) -> list[np.ndarray]:
    return [np.asarray(getattr(r, "phi", r)) for r in records]


def attention_rollout(records: Sequence) -> np.ndarray:
    """Chain-multiply head-averaged attention maps of consecutive layers.

    Accepts ``AttentionRecord`` objects or raw (b, n, n) arrays.  A single map is
    returned as-is (a copy), so zero extra steps costs nothing.
    """
    maps = _as_maps(records)
    if not maps:
        raise UsageError("attention_rollout needs at least one attention map")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise UsageError(f"attention maps disagree in shape: {shape} vs {m.shape}")
    out = maps[0].copy()
    for m in maps[1:]:
        out = out @ m
    return out


def token_saliency(rollout: np.ndarray) -> SaliencyMap:
    """Per-token saliency as the column mean of the rollout matrix."""
    a = np.asarray(rollout)
    return SaliencyMap(a.mean(axis=1), SaliencySource.ATTENTION_ROLLOUT)


def _normalize_rows(scores: np.ndarray) -> np.ndarray:
    total = scores.sum(axis=1, keepdims=True)
    n = scores.shape[1]
    uniform = np.full_like(scores, 1.0 / n)
    safe = np.where(total > 0, total, 1)
    return np.where(total > 0, scores / safe, uniform)


def gradient_saliency(model, images=None, labels=None, layer: Optional[int] = None,
                      tokens: Optional[Tensor] = None) -> SaliencyMap:
    """L2 norm over channels of dLoss/dToken at ``layer``'s input, normalised per instance.

    Pass ``tokens`` (that layer's input) to skip the shared forward up to the hook point.
    """
    layer = layer or model.cfg.htm_layer or 1
    if tokens is None:
        captured: list[Tensor] = []

        def grab(x, trace):
            captured.append(x)
            return x

        trace = model.forward(images, {layer: grab})
        x = captured[0]
    else:
        x = stop_gradient(tokens)
        x.requires_grad = True
        trace = model.encoder_forward(x, start_layer=layer)
    loss = ops.cross_entropy(trace.logits, labels).sum()
    (g,) = grad(loss, [x])
    scores = np.sqrt((g.astype(np.float64) ** 2).sum(axis=-1))
    return SaliencyMap(_normalize_rows(scores).astype(np.float32), SaliencySource.GRADIENT)


def random_saliency(rng: np.random.Generator, b: int, n: int) -> SaliencyMap:
    scores = rng.random((b, n))
    return SaliencyMap(_normalize_rows(scores).astype(np.float32), SaliencySource.RANDOM)


def total_variation(s, norm: str = "L1", shape: Optional[tuple[int, int]] = None) -> float:
    """Anisotropic (L1) or isotropic (L2) total variation of one map on its token grid.

    Neighbours outside the grid are skipped rather than padded.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim == 1:
        n = s.size
        if shape is None:
            side = int(round(np.sqrt(n)))
            if side * side != n:
                raise UsageError(f"{n} tokens do not form a square grid; pass shape=")
            shape = (side, side)
        if shape[0] * shape[1] != n:
            raise UsageError(f"grid {shape} does not hold {n} tokens")
        s = s.reshape(shape)
    elif s.ndim != 2:
        raise UsageError(f"expected a 1-D or 2-D map, got shape {s.shape}")
    dv = np.zeros_like(s)
    dh = np.zeros_like(s)
    dv[:-1, :] = s[1:, :] - s[:-1, :]
    dh[:, :-1] = s[:, 1:] - s[:, :-1]
    norm = norm.upper()
    if norm == "L1":
        return float(np.abs(dv).sum() + np.abs(dh).sum())
    if norm == "L2":
        return float(np.sqrt(dv ** 2 + dh ** 2).sum())
    raise UsageError(f"unknown norm {norm!r}")


def saliency_variance(s) -> np.ndarray:
    scores = np.asarray(getattr(s, "scores", s), dtype=np.float64)
    return scores.var(axis=-1)
