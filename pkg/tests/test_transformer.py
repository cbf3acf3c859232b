import math

import numpy as np
import pytest

from conftest import one_hot, tiny_config, tiny_model
from helpers import full_gradient_check
from tokenmixup import numerics as nx
from tokenmixup.errors import ConfigError, ShapeError
from tokenmixup.numerics import ops
from tokenmixup.numerics.tensor import Tensor, grad, no_grad
from tokenmixup.training import train_step
from tokenmixup.transformer import ModelConfig, Transformer, patchify


def images(rng, b=3, size=8):
    return rng.uniform(-1, 1, (b, 1, size, size)).astype(np.float32)


# config ----------------------------------------------------------------------

def test_defaults():
    cfg = ModelConfig()
    assert (cfg.depth, cfg.dim, cfg.heads, cfg.n_tokens, cfg.num_classes) == (4, 64, 4, 16, 4)
    assert (cfg.htm_layer, cfg.vtm_layer, cfg.tau, cfg.rho, cfg.kappa, cfg.ell) == (2, 3, 0.2, 0.005, 5, 0)


@pytest.mark.parametrize("kw", [
    dict(image_size=10, patch_size=4), dict(dim=10, heads=4), dict(htm_layer=5),
    dict(htm_layer=0), dict(vtm_layer=1), dict(vtm_layer=9), dict(kappa=17), dict(tau=-1.0),
    dict(htm_layer=4, ell=1),
])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**kw)


# tokenizer -------------------------------------------------------------------

def test_tokenize_count():
    model = Transformer(ModelConfig(htm_layer=None, vtm_layer=None))
    assert model.tokenize_patches(np.zeros((2, 1, 16, 16))).shape == (2, 16, 64)


def test_tokenize_zero_image():
    model = tiny_model()
    model["pos"].data[:] = 0
    assert not model.tokenize_patches(np.zeros((1, 1, 8, 8))).data.any()


def test_tokenize_patch_permutation(rng):
    model = tiny_model()
    model["pos"].data[:] = 0
    img = images(rng, 1)
    swapped = img.copy()
    swapped[..., 0:4, 0:4], swapped[..., 4:8, 4:8] = img[..., 4:8, 4:8], img[..., 0:4, 0:4]
    a = model.tokenize_patches(img).data[0]
    b = model.tokenize_patches(swapped).data[0]
    assert np.array_equal(a[[3, 1, 2, 0]], b)


def test_tokenize_wrong_size():
    with pytest.raises(ConfigError):
        tiny_model().tokenize_patches(np.zeros((1, 1, 12, 12)))


def test_patchify_order():
    img = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
    p = patchify(img, 2)
    assert p.shape == (1, 4, 4)
    assert p[0, 1].tolist() == [2, 3, 6, 7]


# attention -------------------------------------------------------------------

def test_kv_equal_x_bitwise(rng):
    model = tiny_model()
    x = Tensor(rng.standard_normal((2, 4, 8)))
    z1, r1 = model.attention_layer(x, None, 1)
    z2, r2 = model.attention_layer(x, Tensor(x.data.copy()), 1)
    assert np.array_equal(z1.data, z2.data) and np.array_equal(r1.phi, r2.phi)


def test_singleton_attention(rng):
    model = tiny_model()
    _, rec = model.attention_layer(Tensor(rng.standard_normal((1, 1, 8))), None, 1)
    assert rec.phi.tolist() == [[[1.0]]]


def test_attention_per_head_oracle(rng):
    model = tiny_model()
    x = rng.standard_normal((2, 4, 8))
    z, rec = model.attention_layer(Tensor(x), None, 1)
    p = {k: model[f"layer.1.{k}"].data.astype(np.float64) for k in
         ("ln1.g", "ln1.b", "attn.wq", "attn.wk", "attn.wv", "attn.wo", "attn.bo")}
    xn = (x - x.mean(-1, keepdims=True)) / np.sqrt(x.var(-1, keepdims=True) + 1e-5) * p["ln1.g"] + p["ln1.b"]
    q, k, v = xn @ p["attn.wq"], xn @ p["attn.wk"], xn @ p["attn.wv"]
    outs, maps = [], []
    for h in range(2):
        sl = slice(4 * h, 4 * h + 4)
        s = q[..., sl] @ k[..., sl].transpose(0, 2, 1) / math.sqrt(4)
        a = np.exp(s - s.max(-1, keepdims=True))
        a /= a.sum(-1, keepdims=True)
        maps.append(a)
        outs.append(a @ v[..., sl])
    ref = np.concatenate(outs, -1) @ p["attn.wo"] + p["attn.bo"]
    assert np.allclose(z.data, ref, atol=1e-5)
    assert np.allclose(rec.phi, np.mean(maps, axis=0), atol=1e-6)


def test_cross_attention_token_count(rng):
    model = tiny_model()
    z, rec = model.attention_layer(Tensor(rng.standard_normal((2, 4, 8))), Tensor(rng.standard_normal((2, 7, 8))), 2)
    assert z.shape == (2, 4, 8) and rec.phi.shape == (2, 4, 7)
    assert np.allclose(rec.phi.sum(-1), 1, atol=1e-5)


def test_attention_dim_mismatch(rng):
    with pytest.raises(ShapeError):
        tiny_model().attention_layer(Tensor(rng.standard_normal((2, 4, 8))), Tensor(rng.standard_normal((2, 4, 6))), 1)


# encoder ---------------------------------------------------------------------

def test_depth_zero():
    model = Transformer(tiny_config(depth=0, htm_layer=None, vtm_layer=None))
    trace = model.forward(np.zeros((2, 1, 8, 8)))
    assert trace.snapshots == [] and trace.records == [] and trace.logits.shape == (2, 3)


def test_identity_hooks_bitwise(rng):
    model = tiny_model()
    img = images(rng)
    plain = model.forward(img).logits.data
    hooked = model.forward(img, {1: lambda x, t: x, 2: lambda x, t: x}).logits.data
    assert np.array_equal(plain, hooked)


def test_zero_hook_leaves_earlier_layers(rng):
    model = Transformer(tiny_config(depth=3, htm_layer=None, vtm_layer=None), np.random.default_rng(0))
    img = images(rng)
    a = model.forward(img)
    b = model.forward(img, {3: lambda x, t: Tensor(np.zeros(x.shape))})
    for k in range(2):
        assert np.array_equal(a.snapshots[k].data, b.snapshots[k].data)
        assert np.array_equal(a.records[k].phi, b.records[k].phi)
    assert not np.array_equal(a.records[2].phi, b.records[2].phi)


def test_hook_bad_shape(rng):
    with pytest.raises(ShapeError):
        tiny_model().forward(images(rng), {2: lambda x, t: Tensor(np.zeros((1, 4, 8)))})


def test_trace_one_record_per_layer_and_stochastic(rng):
    trace = tiny_model().forward(images(rng))
    assert len(trace.snapshots) == len(trace.records) == 2
    for rec in trace.records:
        assert (rec.phi >= 0).all() and np.allclose(rec.phi.sum(-1), 1, atol=1e-5)


# pooling classifier ------------------------------------------------------------

def test_pool_single_token(rng):
    model = tiny_model()
    x = rng.standard_normal((2, 1, 8))
    ref = x[:, 0] @ model["head.w"].data + model["head.b"].data
    assert np.allclose(model.sequence_pool_classify(Tensor(x)).data, ref, atol=1e-5)


def test_pool_identical_tokens(rng):
    model = tiny_model()
    tok = rng.standard_normal((2, 1, 8))
    x = np.repeat(tok, 4, axis=1)
    ref = tok[:, 0] @ model["head.w"].data + model["head.b"].data
    assert np.allclose(model.sequence_pool_classify(Tensor(x)).data, ref, atol=1e-5)


def test_pool_oracle(rng):
    model = tiny_model()
    x = rng.standard_normal((3, 4, 8))
    s = (x @ model["pool.w"].data + model["pool.b"].data)[..., 0]
    w = np.exp(s - s.max(1, keepdims=True))
    w /= w.sum(1, keepdims=True)
    ref = (w[..., None] * x).sum(1) @ model["head.w"].data + model["head.b"].data
    assert np.allclose(model.sequence_pool_classify(Tensor(x)).data, ref, atol=1e-5)


# training step -----------------------------------------------------------------

def _step(model, rng, b=4):
    y = one_hot(rng.integers(0, 3, b), 3)
    opt = nx.SGD(model.parameters(), 0.01, 0.9)
    return train_step(model, images(rng, b), y, opt)


def test_plain_step(rng):
    model = tiny_model(htm_layer=None, vtm_layer=None)
    rep = _step(model, rng)
    assert rep.num_mixed == 0 and rep.tokens_replaced == 0 and rep.scorenet_loss == 0.0
    assert rep.hook_calls == {}


def test_tau_zero_no_mix(rng):
    rep = _step(tiny_model(tau=0.0), rng)
    assert rep.num_mixed == 0 and rep.tokens_replaced == 0


def test_tau_inf_rho_zero_mixes(rng):
    model = tiny_model(tau=float("inf"), rho=0.0, vtm_layer=None)
    rep = _step(model, rng, b=2)
    assert rep.num_mixed == 2
    assert rep.tokens_replaced > 0


def test_logits_shape_under_hooks(rng):
    model = tiny_model(tau=float("inf"), rho=0.0)
    from tokenmixup.training import mixup_forward
    trace, state = mixup_forward(model, images(rng, 5), one_hot(rng.integers(0, 3, 5), 3))
    assert trace.logits.shape == (5, 3)
    assert all(t.shape == (5, 4, 8) for t in trace.layer_inputs)
    assert np.allclose(state.labels.sum(1), 1, atol=1e-6)


def test_scorenet_branch_gives_encoder_no_gradient(rng):
    from tokenmixup.scorenet import scorenet_aux_loss
    model = tiny_model()
    x = model.tokenize_patches(images(rng))
    loss = scorenet_aux_loss(model, x, one_hot(np.array([0, 1, 2]), 3))
    names = [k for k, _ in model.named_parameters()]
    grads = grad(loss, [p for _, p in model.named_parameters()])
    for k, g in zip(names, grads):
        assert bool(g.any()) == k.startswith("scorenet."), k


def test_full_model_gradient_check():
    model = tiny_model(tau=float("inf"), rho=0.0)
    rng = np.random.default_rng(0)
    errors, state, _ = full_gradient_check(model, rng.uniform(-1, 1, (4, 1, 8, 8)),
                                           one_hot(np.array([0, 1, 2, 0]), 3))
    assert state.report.total_tokens_replaced > 0
    assert max(errors.values()) < 1e-4, max(errors.items(), key=lambda kv: kv[1])


def test_checkpoint_parameter_names(tmp_path):
    model = tiny_model()
    model.save(tmp_path / "m.tkmx")
    back = nx.load_checkpoint(tmp_path / "m.tkmx")
    assert "layer.2.attn.wq" in back and "scorenet.w1" in back
    other = tiny_model(seed=5)
    other.load_state_dict(back)
    with no_grad():
        x = np.zeros((1, 1, 8, 8))
        assert np.array_equal(other.forward(x).logits.data, model.forward(x).logits.data)
