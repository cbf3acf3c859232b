import numpy as np
import pytest

from conftest import one_hot, random_saliency_rows
from tokenmixup.assignment import brute_force_match
from tokenmixup.errors import UsageError
from tokenmixup.htm import (
    mix_mask, mix_tokens, pairwise_gain, random_sample_baseline, random_token_baseline,
    relabel, relabel_weight, token_mixup,
)
from tokenmixup.numerics.tensor import Tensor
from tokenmixup.transformer import ModelConfig

CFG = ModelConfig()


def batch(rng, b=6, n=16, d=8, c=4):
    x = Tensor(rng.standard_normal((b, n, d)))
    y = one_hot(rng.integers(0, c, b), c)
    s = random_saliency_rows(rng, b, n)
    return x, y, s


# gain ------------------------------------------------------------------------

def test_gain_diagonal_zero(rng):
    s = random_saliency_rows(rng, 5, 9)
    assert np.all(np.diag(pairwise_gain(s, s, 0.0)) == 0)


def test_gain_uniform_vs_onehot():
    easy = np.full((1, 4), 0.25)
    src = np.array([[0, 0, 1.0, 0]])
    assert pairwise_gain(easy, src, 0.0)[0, 0] == pytest.approx(0.75)


def test_gain_rho_one_zero(rng):
    s = random_saliency_rows(rng, 4, 6)
    assert not pairwise_gain(s[:2], s, 1.0).any()


def test_gain_nonnegative_shape(rng):
    s = random_saliency_rows(rng, 6, 5)
    c = pairwise_gain(s[[1, 4]], s, 0.005)
    assert c.shape == (2, 6) and (c >= 0).all()


def test_gain_negative_rho(rng):
    with pytest.raises(UsageError):
        pairwise_gain(np.ones((1, 2)) / 2, np.ones((1, 2)) / 2, -0.1)


# mask ------------------------------------------------------------------------

def test_mask_identical():
    s = np.array([0.2, 0.3, 0.5])
    assert mix_mask(s, s, 0.0).tolist() == [1, 1, 1]


def test_mask_hand():
    m = mix_mask(np.array([0.1, 0.4, 0.5]), np.array([0.6, 0.3, 0.1]), 0.005)
    assert m.tolist() == [0, 1, 1]


def test_mask_infinite_rho(rng):
    s = random_saliency_rows(rng, 2, 5)
    assert mix_mask(s[0], s[1], float("inf")).all()


def test_mask_strict():
    assert mix_mask(np.array([0.0, 0.5]), np.array([0.25, 0.5]), 0.25).tolist() == [1, 1]


# token splice ----------------------------------------------------------------

def test_mix_all_ones_and_zeros(rng):
    a, b = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    assert np.array_equal(mix_tokens(Tensor(a), Tensor(b), np.ones(4)).data, a.astype(np.float32))
    assert np.array_equal(mix_tokens(Tensor(a), Tensor(b), np.zeros(4)).data, b.astype(np.float32))


def test_mix_manual(rng):
    a, b = rng.standard_normal((2, 3)).astype(np.float32), rng.standard_normal((2, 3)).astype(np.float32)
    out = mix_tokens(Tensor(a), Tensor(b), np.array([0, 1])).data
    assert np.array_equal(out[0], b[0]) and np.array_equal(out[1], a[1])


def test_mix_gradient_reaches_both(rng):
    from tokenmixup.numerics import ops
    from tokenmixup.numerics.tensor import backward
    a = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
    b = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
    backward(ops.sum(mix_tokens(a, b, np.array([1, 0, 1]))))
    assert a.grad[:, 0].tolist() == [1, 0, 1] and b.grad[:, 0].tolist() == [0, 1, 0]


# relabel ---------------------------------------------------------------------

def test_relabel_keep_all():
    y = np.array([0.0, 1.0, 0.0])
    assert np.array_equal(relabel(y, np.array([1.0, 0, 0]), np.full(3, 1 / 3), np.full(3, 1 / 3), np.ones(3)), y)


def test_relabel_hand():
    s_easy = np.full(4, 0.25)
    s_src = np.array([0.1, 0.1, 0.4, 0.4])
    m = np.array([1, 1, 0, 0])
    w = relabel_weight(s_easy, s_src, m)
    assert w == pytest.approx(0.5 / 1.3)
    out = relabel(np.array([1.0, 0.0]), np.array([0.0, 1.0]), s_easy, s_src, m)
    assert out == pytest.approx([0.384615, 0.615385], abs=1e-6)


def test_relabel_zero_denominator():
    y = np.array([1.0, 0.0])
    out = relabel(y, np.array([0.0, 1.0]), np.zeros(3), np.zeros(3), np.array([0, 1, 0]))
    assert np.array_equal(out, y)


def test_relabel_convex(rng):
    for _ in range(100):
        s = random_saliency_rows(rng, 2, 6)
        m = (rng.random(6) < 0.5).astype(float)
        out = relabel(np.eye(3)[rng.integers(3)], np.eye(3)[rng.integers(3)], s[0], s[1], m)
        assert out.sum() == pytest.approx(1, abs=1e-6) and (out >= 0).all() and (out <= 1).all()


# pipeline --------------------------------------------------------------------

def test_no_easy_bitwise(rng):
    x, y, s = batch(rng)
    xo, yo, rep = token_mixup(x, y, s, np.full(6, 5.0), CFG)
    assert xo is x and np.array_equal(yo, y) and rep.num_mixed == 0


def test_two_sample_gain_matches_brute_force():
    x = Tensor(np.arange(2 * 4 * 2, dtype=np.float32).reshape(2, 4, 2))
    y = one_hot(np.array([0, 1]), 2)
    s = np.array([[0.7, 0.1, 0.1, 0.1], [0.1, 0.1, 0.1, 0.7]])
    cfg = CFG.with_(tau=float("inf"), rho=0.0)
    xo, yo, rep = token_mixup(x, y, s, np.zeros(2), cfg)
    best = brute_force_match(pairwise_gain(s, s, 0.0))
    assert rep.realized_gain == pytest.approx(best.realized_gain)
    assert rep.sigma == {0: 1, 1: 0}
    after = sum((rep.masks[i] * s[i] + (1 - rep.masks[i]) * s[j]).sum() for i, j in rep.sigma.items())
    assert after == pytest.approx(s.sum() + best.realized_gain)
    # sample 0 takes token 3 from sample 1 and vice versa for token 0
    assert np.array_equal(xo.data[0, 3], x.data[1, 3]) and np.array_equal(xo.data[1, 0], x.data[0, 0])
    # kept 0.7 + 0.1 + 0.1, brought in 0.7
    assert yo[0] == pytest.approx([0.9 / 1.6, 0.7 / 1.6])


def test_sources_use_premix_tokens(rng):
    # a chain where 0 takes from 1 and 1 takes from 0: both must read pre-mix rows
    x = Tensor(rng.standard_normal((2, 3, 2)))
    s = np.array([[0.8, 0.1, 0.1], [0.1, 0.1, 0.8]])
    xo, _, _ = token_mixup(x, one_hot(np.array([0, 1]), 2), s, np.zeros(2), CFG.with_(tau=1.0))
    assert np.array_equal(xo.data[0, 2], x.data[1, 2]) and np.array_equal(xo.data[1, 0], x.data[0, 0])


@pytest.mark.parametrize("trial", range(100))
def test_random_batches_valid(trial):
    rng = np.random.default_rng(trial)
    x, y, s = batch(rng, b=int(rng.integers(2, 9)))
    u = rng.random(len(y)) * 0.4
    xo, yo, rep = token_mixup(x, y, s, u, CFG)
    assert xo.shape == x.shape
    assert np.allclose(yo.sum(1), 1, atol=1e-6) and (yo >= 0).all() and (yo <= 1 + 1e-7).all()
    assert set(rep.sigma) == {i for i in range(len(u)) if u[i] < CFG.tau}
    assert len(set(rep.sigma.values())) == len(rep.sigma)
    for i, j in rep.sigma.items():
        replaced = rep.masks[i] == 0
        assert ((s[j] - s[i])[replaced] > CFG.rho).all()
        assert np.array_equal(xo.data[i][replaced], x.data[j][replaced])
        assert np.array_equal(xo.data[i][~replaced], x.data[i][~replaced])
    untouched = [i for i in range(len(u)) if i not in rep.sigma]
    assert np.array_equal(xo.data[untouched], x.data[untouched])


def test_deterministic_report(rng):
    x, y, s = batch(rng)
    u = np.zeros(6)
    a = token_mixup(x, y, s, u, CFG)[2]
    b = token_mixup(x, y, s, u, CFG)[2]
    assert a.sigma == b.sigma and np.array_equal(a.tokens_replaced, b.tokens_replaced)
    assert a.realized_gain == b.realized_gain


def test_rho_one_no_op(rng):
    x, y, s = batch(rng)
    xo, yo, rep = token_mixup(x, y, s, np.zeros(6), CFG.with_(rho=1.0))
    assert rep.num_mixed == 6 and rep.total_tokens_replaced == 0
    assert np.array_equal(xo.data, x.data) and np.array_equal(yo, y)


# baselines -------------------------------------------------------------------

def test_random_sample_zero(rng):
    x, y, s = batch(rng)
    xo, yo, rep = random_sample_baseline(x, y, s, CFG, 0, rng)
    assert xo is x and rep.num_mixed == 0


def test_random_sample_seeded(rng):
    x, y, s = batch(rng)
    a = random_sample_baseline(x, y, s, CFG, 6, np.random.default_rng(5))[2]
    b = random_sample_baseline(x, y, s, CFG, 6, np.random.default_rng(5))[2]
    assert a.easy == b.easy == tuple(range(6))


def test_random_sample_mean_count():
    rng = np.random.default_rng(0)
    b, k = 10, 3.0
    x, y, s = batch(rng, b=b)
    counts = [random_sample_baseline(x, y, s, CFG, k, rng)[2].num_easy for _ in range(1000)]
    sigma = np.sqrt(b * (k / b) * (1 - k / b) / 1000)
    assert abs(np.mean(counts) - k) < 3 * sigma


def test_random_token_zero(rng):
    x, y, _ = batch(rng)
    xo, yo, rep = random_token_baseline(x, y, CFG, 0, rng)
    assert xo is x and np.array_equal(yo, y)


def test_random_token_full(rng):
    x, y, _ = batch(rng)
    xo, yo, rep = random_token_baseline(x, y, CFG, 16, rng)
    for i, j in rep.sigma.items():
        assert np.array_equal(xo.data[i], x.data[j]) and np.array_equal(yo[i], y[j])


def test_random_token_too_many(rng):
    x, y, _ = batch(rng)
    with pytest.raises(UsageError):
        random_token_baseline(x, y, CFG, 17, rng)


def test_random_token_labels_valid():
    rng = np.random.default_rng(7)
    for _ in range(100):
        x, y, _ = batch(rng)
        count = int(rng.integers(0, 17))
        _, yo, rep = random_token_baseline(x, y, CFG, count, rng)
        assert np.allclose(yo.sum(1), 1, atol=1e-6) and (yo >= 0).all()
        assert sorted(rep.sigma.values()) == (list(range(6)) if count else [])
