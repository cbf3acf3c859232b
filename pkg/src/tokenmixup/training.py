"""One supervised step with HTM / VTM hooks attached to the encoder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assignment import hungarian_match
from .htm import MixReport, mix_mask, pairwise_gain, random_sample_baseline, random_token_baseline, token_mixup
from .numerics import ops
from .numerics.optim import SGD
from .numerics.tensor import Tensor, backward, no_grad, stop_gradient
from .saliency import attention_rollout, token_saliency
from .scorenet import difficulty
from .vtm import make_vtm_hook

HTM_VARIANTS = ("htm", "random_sample", "random_token")


@dataclass
class StepReport:
    loss: float
    scorenet_loss: float
    num_mixed: int
    tokens_replaced: int
    num_easy: int = 0
    realized_gain: float = 0.0
    correct: int = 0
    batch_size: int = 0
    hook_calls: dict = field(default_factory=dict)


@dataclass
class MixState:
    """What the hooks produced during one forward pass."""

    labels: np.ndarray
    aux_loss: Optional[Tensor] = None
    report: Optional[MixReport] = None
    saliency: Optional[np.ndarray] = None
    stats: dict = field(default_factory=dict)


def hook_saliency(model, x: Tensor, layer: int, ell: int) -> np.ndarray:
    """Attention-rollout saliency of the tokens entering ``layer``, computed under stop-gradient."""
    return token_saliency(attention_rollout(model.probe_attention(x, layer, ell))).scores


def average_salient_count(s: np.ndarray, rho: float) -> int:
    """Mean replaced-token count if every sample were mixed by the optimal matching."""
    plan = hungarian_match(pairwise_gain(s, s, rho))
    counts = [int((mix_mask(s[i], s[j], rho) == 0).sum()) for i, j in enumerate(plan.sigma)]
    return int(round(float(np.mean(counts))))


def make_htm_hook(model, state: MixState, variant: str = "htm",
                  rng: Optional[np.random.Generator] = None, random_k: float = 5.0):
    if variant not in HTM_VARIANTS:
        raise ValueError(f"unknown HTM variant {variant!r}")
    cfg = model.cfg
    layer = cfg.htm_layer

    def hook(x: Tensor, trace):
        state.stats["htm_calls"] = state.stats.get("htm_calls", 0) + 1
        y = state.labels
        u_t = difficulty(model, x, y)
        state.aux_loss = ops.mean(u_t)
        u = stop_gradient(u_t).data
        if variant == "htm":
            if not (u < cfg.tau).any():
                state.report = MixReport(x.shape[0])
                return x
            s = hook_saliency(model, x, layer, cfg.ell)
            x_new, y_new, rep = token_mixup(x, y, s, u, cfg)
        elif variant == "random_sample":
            s = hook_saliency(model, x, layer, cfg.ell)
            x_new, y_new, rep = random_sample_baseline(x, y, s, cfg, random_k, rng)
        else:
            s = hook_saliency(model, x, layer, cfg.ell)
            count = average_salient_count(s, cfg.rho)
            x_new, y_new, rep = random_token_baseline(x, y, cfg, count, rng)
        state.saliency = s
        state.labels = y_new
        state.report = rep
        return x_new

    return hook


def mixup_forward(model, images, labels, variant: str = "htm", rng=None, random_k: float = 5.0,
                  use_htm: Optional[bool] = None, use_vtm: Optional[bool] = None):
    """Forward pass with whatever hooks the model config asks for.

    Returns ``(trace, state)``; ``state.labels`` are the labels the loss must use.
    """
    cfg = model.cfg
    use_htm = cfg.htm_layer is not None if use_htm is None else use_htm
    use_vtm = cfg.vtm_layer is not None if use_vtm is None else use_vtm
    state = MixState(labels=np.asarray(labels, dtype=model["head.w"].dtype))
    hooks = {}
    if use_htm:
        hooks[cfg.htm_layer] = make_htm_hook(model, state, variant, rng, random_k)
    if use_vtm:
        vtm = make_vtm_hook(cfg, state.stats)
        if use_htm and cfg.htm_layer == cfg.vtm_layer:
            htm = hooks[cfg.htm_layer]
            hooks[cfg.vtm_layer] = lambda x, trace: vtm(htm(x, trace), trace)
        else:
            hooks[cfg.vtm_layer] = vtm
    trace = model.encoder_forward(model.tokenize_patches(images), hooks)
    return trace, state


def total_loss(model, trace, state: MixState) -> tuple[Tensor, Tensor]:
    ce = ops.mean(ops.cross_entropy(trace.logits, state.labels))
    if state.aux_loss is None:
        return ce, ce
    return ce + state.aux_loss * model.cfg.score_loss_weight, ce


def train_step(model, images, labels, optimizer: SGD, variant: str = "htm",
               rng: Optional[np.random.Generator] = None, random_k: float = 5.0,
               use_htm: Optional[bool] = None, use_vtm: Optional[bool] = None) -> StepReport:
    """Forward with hooks, loss on (possibly relabelled) targets plus ScoreNet loss, backward, SGD."""
    trace, state = mixup_forward(model, images, labels, variant, rng, random_k, use_htm, use_vtm)
    loss, ce = total_loss(model, trace, state)
    backward(loss)
    optimizer.step()
    rep = state.report or MixReport(len(images))
    truth = np.asarray(labels).argmax(axis=1)
    return StepReport(
        loss=float(ce.item()),
        scorenet_loss=float(state.aux_loss.item()) if state.aux_loss is not None else 0.0,
        num_mixed=rep.num_mixed,
        tokens_replaced=rep.total_tokens_replaced,
        num_easy=rep.num_easy,
        realized_gain=rep.realized_gain,
        correct=int((trace.logits.data.argmax(axis=1) == truth).sum()),
        batch_size=len(images),
        hook_calls={k: v for k, v in state.stats.items() if k.endswith("_calls")},
    )


def predict(model, images) -> np.ndarray:
    with no_grad():
        return model.forward(images).logits.data
