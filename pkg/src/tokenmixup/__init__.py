"""Saliency-guided token-level mixup for transformer encoders.

Horizontal mixing swaps low-saliency tokens of easy samples for high-saliency
tokens from an optimally matched partner; vertical mixing lets a layer attend to
the most salient tokens of earlier layers.  A small numpy autodiff engine and toy
transformer make the whole mechanism trainable and checkable on a laptop.
"""
from ._kernels import BACKEND
from .assignment import MatchPlan, brute_force_match, hungarian_match
from .errors import ConfigError, NumericError, ShapeError, TokenMixupError, UsageError
from .htm import (
    MixReport, mix_mask, mix_tokens, pairwise_gain, random_sample_baseline, random_token_baseline,
    relabel, token_mixup,
)
from .saliency import (
    SaliencyMap, SaliencySource, attention_rollout, gradient_saliency, random_saliency,
    saliency_variance, token_saliency, total_variation,
)
from .scorenet import EasySelection, difficulty, scorenet_aux_loss, scorenet_forward, select_easy
from .training import StepReport, train_step
from .transformer import AttentionRecord, ForwardTrace, ModelConfig, Transformer
from .vtm import PooledTokens, build_extended_tokens, previous_layers, select_topk, vertical_token_mixup

__version__ = "0.1.0"

__all__ = [
    "AttentionRecord", "BACKEND", "ConfigError", "EasySelection", "ForwardTrace", "MatchPlan",
    "MixReport", "ModelConfig", "NumericError", "PooledTokens", "SaliencyMap", "SaliencySource",
    "ShapeError", "StepReport", "TokenMixupError", "Transformer", "UsageError", "attention_rollout",
    "brute_force_match", "build_extended_tokens", "difficulty", "gradient_saliency", "hungarian_match",
    "mix_mask", "mix_tokens", "pairwise_gain", "previous_layers", "random_saliency",
    "random_sample_baseline", "random_token_baseline", "relabel", "saliency_variance",
    "scorenet_aux_loss", "scorenet_forward", "select_easy", "select_topk", "token_mixup",
    "token_saliency", "total_variation", "train_step", "vertical_token_mixup",
]
