"""Wall-clock comparison of attention-based and gradient-based token saliency."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from ..numerics.tensor import Tensor, no_grad
from ..saliency import gradient_saliency, random_saliency
from ..training import hook_saliency
from ..transformer import Transformer
from .config import RunConfig
from .data import generate_synthetic_dataset
from .rng import stream


@dataclass(frozen=True)
class SaliencyBenchmark:
    attention_ms: float
    gradient_ms: float
    random_ms: float
    ratio: float
    layer: int
    batch_size: int


def _median_ms(fn, repeats: int, warmup: int = 2) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return statistics.median(times)


def hook_tokens(model: Transformer, images, layer: int) -> Tensor:
    """Input tokens of ``layer``, computed once and shared by every detector."""
    captured = []

    def grab(x, trace):
        captured.append(x)
        return x

    with no_grad():
        model.forward(images, {layer: grab})
    return captured[0]


def benchmark_saliency(cfg: RunConfig, repeats: int = 20, model: Transformer | None = None) -> SaliencyBenchmark:
    """Median per-batch cost of each detector at the HTM hook point, warmup excluded.

    Only detector work is timed: the forward pass up to the hook layer is shared
    and done beforehand.  ``ratio`` is gradient time over attention time.
    """
    if repeats < 10:
        raise ValueError("use at least 10 repeats for a stable median")
    mcfg = cfg.model
    layer = mcfg.htm_layer or 1
    model = model or Transformer(mcfg.with_(vtm_layer=None), stream(cfg.seed, "init"))
    train, _ = generate_synthetic_dataset(cfg)
    b = min(cfg.batch_size, len(train))
    images = train.images[:b]
    labels = train.one_hot(mcfg.num_classes, np.arange(b))
    x = hook_tokens(model, images, layer)
    rng = stream(cfg.seed, "bench")
    n = x.shape[1]

    attention = _median_ms(lambda: hook_saliency(model, x, layer, mcfg.ell), repeats)
    gradient = _median_ms(lambda: gradient_saliency(model, labels=labels, layer=layer, tokens=x), repeats)
    rand = _median_ms(lambda: random_saliency(rng, b, n), repeats)
    return SaliencyBenchmark(attention, gradient, rand, gradient / attention, layer, b)
