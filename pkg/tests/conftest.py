import numpy as np
import pytest

from tokenmixup import _kernels
from tokenmixup.transformer import ModelConfig, Transformer

BACKENDS = sorted(_kernels.BACKENDS)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(**kw) -> ModelConfig:
    base = dict(image_size=8, patch_size=4, depth=2, heads=2, dim=8, num_classes=3,
                htm_layer=1, vtm_layer=2, kappa=2)
    base.update(kw)
    return ModelConfig(**base)


def tiny_model(seed: int = 0, **kw) -> Transformer:
    return Transformer(tiny_config(**kw), np.random.default_rng(seed))


def random_stochastic(rng, *shape):
    a = rng.random(shape) + 1e-3
    return a / a.sum(axis=-1, keepdims=True)


def random_saliency_rows(rng, b, n):
    return random_stochastic(rng, b, n)


def one_hot(labels, c):
    return np.eye(c, dtype=np.float32)[labels]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
