"""Horizontal token mixup: saliency-maximising token replacement across batch instances."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assignment import MatchPlan, brute_force_match, hungarian_match
from .errors import UsageError
from .numerics import ops
from .numerics.tensor import Tensor
from .scorenet import select_easy

RELABEL_EPS = 1e-12


@dataclass
class MixReport:
    batch_size: int
    easy: tuple[int, ...] = ()
    sigma: dict[int, int] = field(default_factory=dict)
    masks: dict[int, np.ndarray] = field(default_factory=dict)
    keep_weights: dict[int, float] = field(default_factory=dict)
    tokens_replaced: Optional[np.ndarray] = None
    realized_gain: float = 0.0

    def __post_init__(self):
        if self.tokens_replaced is None:
            self.tokens_replaced = np.zeros(self.batch_size, dtype=np.int64)

    @property
    def num_easy(self) -> int:
        return len(self.easy)

    @property
    def num_mixed(self) -> int:
        """Instances the mixup was applied to (paired with a source), replaced tokens or not."""
        return len(self.sigma)

    @property
    def num_changed(self) -> int:
        """Instances that actually had at least one token replaced."""
        return int((self.tokens_replaced > 0).sum())

    @property
    def total_tokens_replaced(self) -> int:
        return int(self.tokens_replaced.sum())

    @property
    def mean_tokens_replaced(self) -> float:
        """Replaced tokens per mixed instance."""
        return self.total_tokens_replaced / self.num_mixed if self.num_mixed else 0.0

    def as_row(self) -> dict[str, float]:
        return {
            "num_mixed": self.num_mixed,
            "mean_tokens_replaced": self.mean_tokens_replaced,
            "realized_gain": self.realized_gain,
        }


def _scores(s) -> np.ndarray:
    return np.asarray(getattr(s, "scores", s), dtype=np.float64)


def pairwise_gain(s_easy, s_all, rho: float) -> np.ndarray:
    """C[i, j] = sum_t max(S_j[t] - S_easy_i[t] - rho, 0); rows are easy samples."""
    if rho < 0:
        raise UsageError(f"rho must be non-negative, got {rho}")
    diff = _scores(s_all)[None, :, :] - _scores(s_easy)[:, None, :]
    return np.maximum(diff - rho, 0.0).sum(axis=-1)


def mix_mask(s_easy_row, s_src_row, rho: float) -> np.ndarray:
    """Keep-mask: 0 where the source token beats ours by strictly more than ``rho``."""
    gain = _scores(s_src_row) - _scores(s_easy_row)
    return (~(gain > rho)).astype(np.float32)


def mix_tokens(x_easy, x_src, m) -> Tensor:
    """Hard token splice ``m * x_easy + (1 - m) * x_src`` with the mask held constant."""
    m = np.asarray(m).astype(bool)
    return ops.where(m[..., :, None], x_easy, x_src)


def relabel(y_easy, y_src, s_easy_row, s_src_row, m) -> np.ndarray:
    """Mix labels in proportion to the saliency mass kept versus brought in."""
    y_easy = np.asarray(y_easy)
    m = np.asarray(m, dtype=np.float64)
    kept = float((m * _scores(s_easy_row)).sum())
    brought = float(((1.0 - m) * _scores(s_src_row)).sum())
    total = kept + brought
    if total < RELABEL_EPS:
        return y_easy.copy()
    w_keep = kept / total
    out = w_keep * y_easy.astype(np.float64) + (1.0 - w_keep) * np.asarray(y_src, dtype=np.float64)
    return out.astype(y_easy.dtype)


def relabel_weight(s_easy_row, s_src_row, m) -> float:
    m = np.asarray(m, dtype=np.float64)
    kept = float((m * _scores(s_easy_row)).sum())
    total = kept + float(((1.0 - m) * _scores(s_src_row)).sum())
    return 1.0 if total < RELABEL_EPS else kept / total


def _splice(x: Tensor, y: np.ndarray, keep: np.ndarray, src: np.ndarray, y_new: np.ndarray,
            report: MixReport):
    if not (~keep).any():
        return x, y.copy(), report
    x_src = ops.take(x, src, axis=0)
    return ops.where(keep[:, :, None], x, x_src), y_new, report


def _mix_selected(x: Tensor, y, s, selected, rho: float, match=hungarian_match):
    y = np.asarray(y)
    scores = _scores(s)
    b, n = scores.shape
    report = MixReport(b, easy=tuple(selected))
    if not selected:
        return x, y.copy(), report
    gains = pairwise_gain(scores[list(selected)], scores, rho)
    plan: MatchPlan = match(gains)
    report.realized_gain = plan.realized_gain
    keep = np.ones((b, n), dtype=bool)
    src = np.arange(b)
    y_new = y.copy()
    for k, i in enumerate(selected):
        j = plan.sigma[k]
        m = mix_mask(scores[i], scores[j], rho)
        report.sigma[i] = j
        report.masks[i] = m
        report.keep_weights[i] = relabel_weight(scores[i], scores[j], m)
        replaced = int(n - m.sum())
        report.tokens_replaced[i] = replaced
        if replaced:
            keep[i] = m.astype(bool)
            src[i] = j
            y_new[i] = relabel(y[i], y[j], scores[i], scores[j], m)
    return _splice(x, y, keep, src, y_new, report)


def token_mixup(x: Tensor, y, s, u, cfg, match=hungarian_match):
    """Gate by difficulty, match easy samples to sources, splice tokens and relabel.

    Sources always contribute their pre-mix tokens; mixed rows go back to their
    original batch positions.  Returns ``(tokens, labels, MixReport)``.
    """
    easy = select_easy(u, cfg.tau).indices
    return _mix_selected(x, y, s, easy, cfg.rho, match)


def random_sample_baseline(x: Tensor, y, s, cfg, k: float, rng: np.random.Generator):
    """Same pipeline as ``token_mixup`` but samples are picked i.i.d. with probability k/b."""
    b = np.asarray(getattr(s, "scores", s)).shape[0]
    if k < 0:
        raise UsageError(f"expected count must be non-negative, got {k}")
    p = min(k / b, 1.0)
    picked = tuple(int(i) for i in np.flatnonzero(rng.random(b) < p))
    return _mix_selected(x, y, s, picked, cfg.rho)


def random_token_baseline(x: Tensor, y, cfg, per_pair_count: int, rng: np.random.Generator):
    """Random pairing and uniformly random token choice; labels mixed by replaced-token count."""
    y = np.asarray(y)
    b, n = x.shape[0], x.shape[1]
    if not 0 <= per_pair_count <= n:
        raise UsageError(f"per_pair_count {per_pair_count} outside [0, {n}]")
    report = MixReport(b, easy=tuple(range(b)))
    if per_pair_count == 0:
        return x, y.copy(), report
    sigma = rng.permutation(b)
    keep = np.ones((b, n), dtype=bool)
    src = np.arange(b)
    y_new = y.copy()
    w_repl = per_pair_count / n
    for i in range(b):
        j = int(sigma[i])
        report.sigma[i] = j
        tokens = rng.choice(n, size=per_pair_count, replace=False)
        m = np.ones(n, dtype=np.float32)
        m[tokens] = 0.0
        report.masks[i] = m
        report.keep_weights[i] = 1.0 - w_repl
        if j == i:
            continue
        report.tokens_replaced[i] = per_pair_count
        keep[i] = m.astype(bool)
        src[i] = j
        y_new[i] = ((1.0 - w_repl) * y[i].astype(np.float64) + w_repl * y[j]).astype(y.dtype)
    return _splice(x, y, keep, src, y_new, report)


__all__ = [
    "MixReport", "brute_force_match", "hungarian_match", "mix_mask", "mix_tokens",
    "pairwise_gain", "random_sample_baseline", "random_token_baseline", "relabel",
    "relabel_weight", "token_mixup",
]
