"""Vertical token mixup: attend over the most salient tokens of earlier layers as extra keys/values."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import ops
from .numerics.tensor import Tensor, stop_gradient
from .saliency import attention_rollout, token_saliency


@dataclass
class PooledTokens:
    layers: list[int] = field(default_factory=list)
    tokens: list[Tensor] = field(default_factory=list)     # each (b, kappa, d)
    indices: list[np.ndarray] = field(default_factory=list)  # each (b, kappa)


def previous_layers(hook_layer: int) -> list[int]:
    if hook_layer < 2:
        raise ConfigError(f"VTM at layer {hook_layer} has no earlier layers to pool from")
    return list(range(1, hook_layer))


def topk_indices(scores, kappa: int) -> np.ndarray:
    """Indices of the ``kappa`` largest scores per row, ties to the lower index, in index order."""
    s = np.asarray(getattr(scores, "scores", scores))
    n = s.shape[-1]
    if not 1 <= kappa <= n:
        raise ConfigError(f"kappa {kappa} outside [1, {n}]")
    order = np.argsort(-s, axis=-1, kind="stable")[..., :kappa]
    return np.sort(order, axis=-1)


def select_topk(x_l: Tensor, s_l, kappa: int, keep_grad: bool = False) -> tuple[Tensor, np.ndarray]:
    idx = topk_indices(s_l, kappa)
    picked = ops.gather_tokens(x_l, idx)
    return (picked if keep_grad else stop_gradient(picked)), idx


def build_extended_tokens(x: Tensor, pooled: PooledTokens) -> Tensor:
    """[x ; pooled(l_1) ; ... ] along the token axis, earlier layers first."""
    for t in pooled.tokens:
        if t.shape[0] != x.shape[0] or t.shape[2] != x.shape[2]:
            raise ShapeError(f"pooled tokens {t.shape} do not fit queries {x.shape}")
    return ops.concat([x, *pooled.tokens], axis=1)


def pool_previous(trace, hook_layer: int, kappa: int, keep_grad: bool = False) -> PooledTokens:
    """Pick each earlier layer's top-kappa tokens by that layer's own attention saliency."""
    pooled = PooledTokens()
    for layer in previous_layers(hook_layer):
        rec = trace.records[layer - 1]
        s = token_saliency(attention_rollout([rec])).scores
        tokens, idx = select_topk(trace.layer_inputs[layer - 1], s, kappa, keep_grad)
        pooled.layers.append(layer)
        pooled.tokens.append(tokens)
        pooled.indices.append(idx)
    return pooled


def vertical_token_mixup(model, trace, x: Tensor, cfg, layer: int | None = None) -> Tensor:
    """Run the hook layer's attention with extended keys/values; returns (b, n, d).

    Only the layer's existing projections are used, so no parameters are added.
    """
    layer = layer or cfg.vtm_layer
    pooled = pool_previous(trace, layer, cfg.kappa, cfg.vtm_pooled_grad)
    z, _ = model.attention_layer(x, build_extended_tokens(x, pooled), layer)
    return z


def make_vtm_hook(cfg, stats: dict | None = None):
    """Hook that swaps the layer's key/value set for the extended one."""

    def hook(x: Tensor, trace):
        pooled = pool_previous(trace, cfg.vtm_layer, cfg.kappa, cfg.vtm_pooled_grad)
        if stats is not None:
            stats["vtm_calls"] = stats.get("vtm_calls", 0) + 1
            stats["vtm_pooled"] = pooled
        return x, build_extended_tokens(x, pooled)

    return hook
