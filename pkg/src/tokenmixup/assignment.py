"""Maximum-gain injective assignment of easy samples to source samples."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import UsageError

BRUTE_FORCE_LIMIT = 8


@dataclass(frozen=True)
class MatchPlan:
    """``sigma[i]`` is the source batch index assigned to easy row ``i``."""

    sigma: tuple[int, ...]
    realized_gain: float

    def as_dict(self) -> dict[int, int]:
        return dict(enumerate(self.sigma))


def _tie_tolerance(c: np.ndarray) -> float:
    scale = float(np.abs(c).max()) if c.size else 0.0
    return 1e-9 * max(1.0, scale)


def _check(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2:
        raise UsageError(f"gain matrix must be 2-D, got shape {c.shape}")
    if c.shape[0] > c.shape[1]:
        raise UsageError(f"more easy rows ({c.shape[0]}) than source columns ({c.shape[1]})")
    if not np.isfinite(c).all():
        raise UsageError("gain matrix has non-finite entries")
    return c


def _plan(c: np.ndarray, sigma) -> MatchPlan:
    sigma = tuple(int(s) for s in sigma)
    gain = float(sum(c[i, s] for i, s in enumerate(sigma)))
    return MatchPlan(sigma, gain)


def hungarian_match(c, backend: Optional[str] = None) -> MatchPlan:
    """Exact maximum-gain assignment of every row to a distinct column.

    The rectangular ``b' x b`` problem is padded with zero-gain rows to a square one
    and negated into a min-cost problem.  Among optimal assignments the
    lexicographically smallest ``sigma`` is returned, which is found by restricting
    to edges that are tight under the optimal dual potentials.
    """
    c = _check(c)
    rows, cols = c.shape
    if rows == 0:
        return MatchPlan((), 0.0)
    kernels = _kernels.BACKENDS[backend] if backend else _kernels
    square = np.zeros((cols, cols))
    square[:rows] = c
    cost = -square
    col4row, u, v = kernels.solve_min(cost)
    reduced = cost - u[:, None] - v[None, :]
    tight = reduced <= _tie_tolerance(c)
    sigma = kernels.lex_min_matching(tight, col4row, rows)
    return _plan(c, sigma[:rows])


def brute_force_match(c) -> MatchPlan:
    """Exhaustive search over injective assignments; reference oracle for small batches."""
    c = _check(c)
    rows, cols = c.shape
    if cols > BRUTE_FORCE_LIMIT:
        raise UsageError(f"brute force limited to b <= {BRUTE_FORCE_LIMIT}, got {cols}")
    best = -np.inf
    gains = []
    for perm in itertools.permutations(range(cols), rows):
        g = sum(c[i, p] for i, p in enumerate(perm))
        gains.append((g, perm))
        best = max(best, g)
    # permutations() yields in lexicographic order, so the first near-optimal one wins
    tol = _tie_tolerance(c) * max(rows, 1)
    for g, perm in gains:
        if g >= best - tol:
            return _plan(c, perm)
    raise AssertionError("unreachable")
