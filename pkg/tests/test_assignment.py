import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from tokenmixup import _assign_py, _kernels
from tokenmixup.assignment import MatchPlan, brute_force_match, hungarian_match
from tokenmixup.errors import UsageError


def test_swap(backend):
    plan = hungarian_match([[0, 5], [5, 0]], backend)
    assert plan.sigma == (1, 0) and plan.realized_gain == 10
    assert plan.as_dict() == {0: 1, 1: 0}


def test_diagonal(backend):
    plan = hungarian_match([[9, 1], [1, 9]], backend)
    assert plan.sigma == (0, 1) and plan.realized_gain == 18


def test_single_row_argmax(backend, rng):
    row = rng.random((1, 7))
    assert hungarian_match(row, backend).sigma == (int(row.argmax()),)


def test_single_row_tie_lowest(backend):
    assert hungarian_match([[0.0, 3.0, 1.0, 3.0]], backend).sigma == (1,)


def test_all_zero_identity_prefix(backend):
    assert hungarian_match(np.zeros((3, 6)), backend).sigma == (0, 1, 2)
    assert brute_force_match(np.zeros((3, 6))).sigma == (0, 1, 2)


def test_empty(backend):
    assert hungarian_match(np.zeros((0, 4)), backend) == MatchPlan((), 0.0)


def test_too_many_rows(backend):
    with pytest.raises(UsageError):
        hungarian_match(np.zeros((3, 2)), backend)


def test_non_finite(backend):
    with pytest.raises(UsageError):
        hungarian_match([[np.nan, 1.0]], backend)


def test_brute_force_limit():
    with pytest.raises(UsageError):
        brute_force_match(np.zeros((2, 9)))


def test_two_by_two_oracle(backend, rng):
    for _ in range(50):
        c = rng.random((2, 2))
        assert hungarian_match(c, backend).realized_gain == brute_force_match(c).realized_gain


@pytest.mark.parametrize("shape", [(5, 7), (7, 7), (3, 8), (8, 8)])
def test_random_against_brute_force(backend, shape):
    rng = np.random.default_rng(sum(shape))
    for _ in range(200 if shape == (5, 7) else 40):
        c = rng.random(shape)
        h, bf = hungarian_match(c, backend), brute_force_match(c)
        assert abs(h.realized_gain - bf.realized_gain) < 1e-6
        assert h.sigma == bf.sigma


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 7), st.integers(0, 7), st.integers(0, 2 ** 31), st.sampled_from(["cont", "ties", "sparse"]))
def test_ties_follow_lexicographic_rule(b, rows, seed, kind):
    rows = min(rows, b)
    rng = np.random.default_rng(seed)
    if kind == "cont":
        c = rng.random((rows, b))
    elif kind == "ties":
        c = rng.integers(0, 3, (rows, b)).astype(float)
    else:
        c = np.where(rng.random((rows, b)) < 0.7, 0.0, rng.random((rows, b)))
    bf = brute_force_match(c)
    for name in _kernels.BACKENDS:
        h = hungarian_match(c, name)
        assert h.sigma == bf.sigma
        assert len(set(h.sigma)) == len(h.sigma)
        assert h.realized_gain == pytest.approx(sum(c[i, j] for i, j in enumerate(h.sigma)), abs=1e-6)


def test_brute_force_is_lexicographic_first():
    c = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    best = max(sum(c[i, p[i]] for i in range(2)) for p in itertools.permutations(range(3), 2))
    assert brute_force_match(c).sigma == (0, 1) and brute_force_match(c).realized_gain == best


@pytest.mark.parametrize("n", [16, 64])
def test_large_matches_scipy(backend, n):
    rng = np.random.default_rng(n)
    c = rng.random((n // 2, n))
    r, k = linear_sum_assignment(c, maximize=True)
    assert hungarian_match(c, backend).realized_gain == pytest.approx(c[r, k].sum(), abs=1e-9)


def test_backends_agree_on_potentials(rng):
    if "cython" not in _kernels.BACKENDS:
        pytest.skip("compiled kernel not built")
    cost = -rng.random((9, 9))
    py = _assign_py.solve_min(cost)
    cy = _kernels.BACKENDS["cython"].solve_min(cost)
    assert np.array_equal(np.asarray(py[0]), np.asarray(cy[0]))
    assert np.allclose(py[1], cy[1]) and np.allclose(py[2], cy[2])


def test_default_backend_is_compiled_when_available():
    assert _kernels.BACKEND == ("cython" if "cython" in _kernels.BACKENDS else "python")


def test_pure_python_fallback_selected_by_env():
    import os
    import subprocess
    import sys
    env = dict(os.environ, TOKENMIXUP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import tokenmixup; print(tokenmixup.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
