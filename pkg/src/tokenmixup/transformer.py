"""Pre-norm transformer encoder with patch tokens, sequence pooling and per-layer hooks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from . import numerics as nx
from .errors import ConfigError, ShapeError
from .numerics import ops
from .numerics.tensor import Tensor, no_grad, stop_gradient


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 16
    patch_size: int = 4
    channels: int = 1
    depth: int = 4
    heads: int = 4
    dim: int = 64
    mlp_ratio: float = 2.0
    num_classes: int = 4
    htm_layer: Optional[int] = 2
    vtm_layer: Optional[int] = 3
    tau: float = 0.2
    rho: float = 0.005
    kappa: int = 5
    ell: int = 0
    score_loss_weight: float = 1.0
    vtm_pooled_grad: bool = False
    ln_eps: float = 1e-5

    def __post_init__(self):
        self.validate()

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_tokens(self) -> int:
        return self.grid * self.grid

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def validate(self) -> None:
        if self.image_size <= 0 or self.patch_size <= 0 or self.image_size % self.patch_size:
            raise ConfigError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.dim <= 0 or self.heads <= 0 or self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.depth < 0 or self.num_classes < 1 or self.channels < 1:
            raise ConfigError("depth, num_classes and channels must be positive")
        if self.htm_layer is not None:
            if not 1 <= self.htm_layer <= self.depth:
                raise ConfigError(f"htm_layer {self.htm_layer} outside [1, {self.depth}]")
            if self.htm_layer + self.ell > self.depth:
                raise ConfigError(f"rollout of {self.ell} steps from layer {self.htm_layer} exceeds depth")
        if self.vtm_layer is not None:
            if not 2 <= self.vtm_layer <= self.depth:
                raise ConfigError(f"vtm_layer {self.vtm_layer} must lie in [2, {self.depth}]")
            if not 1 <= self.kappa <= self.n_tokens:
                raise ConfigError(f"kappa {self.kappa} outside [1, {self.n_tokens}]")
        if self.tau < 0 or self.rho < 0 or self.ell < 0:
            raise ConfigError("tau, rho and ell must be non-negative")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class AttentionRecord:
    """Head-averaged post-softmax attention of one layer, shape (b, n_q, n_kv)."""

    layer: int
    phi: np.ndarray


@dataclass
class ForwardTrace:
    tokens: Optional[Tensor] = None
    snapshots: list[Tensor] = field(default_factory=list)
    layer_inputs: list[Tensor] = field(default_factory=list)
    records: list[AttentionRecord] = field(default_factory=list)
    logits: Optional[Tensor] = None


HookOutput = Union[Tensor, tuple[Tensor, Optional[Tensor]]]
Hook = Callable[[Tensor, ForwardTrace], HookOutput]


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(np.float32)


def patchify(images: np.ndarray, patch_size: int) -> np.ndarray:
    """(b, ch, s, s) -> (b, n, ch * p * p), patches in row-major grid order."""
    b, ch, s, s2 = images.shape
    if s != s2 or s % patch_size:
        raise ConfigError(f"image of size {s}x{s2} cannot be cut into {patch_size}-pixel patches")
    g = s // patch_size
    x = images.reshape(b, ch, g, patch_size, g, patch_size)
    return x.transpose(0, 2, 4, 1, 3, 5).reshape(b, g * g, ch * patch_size * patch_size)


class Transformer:
    """Parameters plus the forward pieces; parameter names are dotted paths."""

    def __init__(self, cfg: ModelConfig, rng: Optional[np.random.Generator] = None,
                 with_scorenet: Optional[bool] = None):
        self.cfg = cfg
        rng = rng if rng is not None else np.random.default_rng(0)
        d, c = cfg.dim, cfg.num_classes
        hidden = int(round(cfg.dim * cfg.mlp_ratio))
        patch_in = cfg.channels * cfg.patch_size ** 2
        p: dict[str, np.ndarray] = {
            "patch.w": _trunc_normal(rng, (patch_in, d)),
            "patch.b": np.zeros(d, np.float32),
            "pos": (rng.standard_normal((cfg.n_tokens, d)) * 0.02).astype(np.float32),
        }
        for i in range(1, cfg.depth + 1):
            pre = f"layer.{i}"
            p[f"{pre}.ln1.g"] = np.ones(d, np.float32)
            p[f"{pre}.ln1.b"] = np.zeros(d, np.float32)
            for w in ("wq", "wk", "wv", "wo"):
                p[f"{pre}.attn.{w}"] = _trunc_normal(rng, (d, d))
            p[f"{pre}.attn.bo"] = np.zeros(d, np.float32)
            p[f"{pre}.ln2.g"] = np.ones(d, np.float32)
            p[f"{pre}.ln2.b"] = np.zeros(d, np.float32)
            p[f"{pre}.mlp.w1"] = _trunc_normal(rng, (d, hidden))
            p[f"{pre}.mlp.b1"] = np.zeros(hidden, np.float32)
            p[f"{pre}.mlp.w2"] = _trunc_normal(rng, (hidden, d))
            p[f"{pre}.mlp.b2"] = np.zeros(d, np.float32)
        p["norm.g"] = np.ones(d, np.float32)
        p["norm.b"] = np.zeros(d, np.float32)
        p["pool.w"] = _trunc_normal(rng, (d, 1))
        p["pool.b"] = np.zeros(1, np.float32)
        p["head.w"] = _trunc_normal(rng, (d, c))
        p["head.b"] = np.zeros(c, np.float32)
        if with_scorenet if with_scorenet is not None else cfg.htm_layer is not None:
            from .scorenet import init_scorenet
            p.update(init_scorenet(cfg, rng))
        self.params: dict[str, Tensor] = {k: Tensor(v, requires_grad=True, dtype=v.dtype) for k, v in p.items()}

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    @property
    def has_scorenet(self) -> bool:
        return "scorenet.w1" in self.params

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
        for k, t in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != t.shape:
                raise ShapeError(f"{k}: checkpoint shape {arr.shape} != model shape {t.shape}")
            t.data = arr.astype(t.dtype)

    def astype(self, dtype) -> "Transformer":
        for t in self.params.values():
            t.data = t.data.astype(dtype)
            t.grad = None
        return self

    def save(self, path) -> None:
        nx.save_checkpoint(path, self.state_dict())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    # forward pieces -------------------------------------------------------

    def tokenize_patches(self, images) -> Tensor:
        images = np.asarray(images, dtype=self["patch.w"].dtype)
        cfg = self.cfg
        if images.ndim != 4 or images.shape[1] != cfg.channels or images.shape[2] != cfg.image_size:
            raise ConfigError(f"expected images (b, {cfg.channels}, {cfg.image_size}, {cfg.image_size}), "
                              f"got {images.shape}")
        patches = Tensor._wrap(patchify(images, cfg.patch_size))
        return patches @ self["patch.w"] + self["patch.b"] + self["pos"]

    def attention_layer(self, x: Tensor, kv: Optional[Tensor], layer: int) -> tuple[Tensor, AttentionRecord]:
        """Pre-norm multi-head attention sublayer (without the residual).

        Queries come from ``x``; keys and values from ``kv`` (``x`` itself when omitted).
        The output has as many tokens as ``x``.
        """
        pre = f"layer.{layer}"
        kv = x if kv is None else kv
        if kv.ndim != 3 or kv.shape[0] != x.shape[0] or kv.shape[2] != x.shape[2]:
            raise ShapeError(f"key/value tokens {kv.shape} incompatible with queries {x.shape}")
        g, b = self[f"{pre}.ln1.g"], self[f"{pre}.ln1.b"]
        q_in = ops.layer_norm(x, g, b, self.cfg.ln_eps)
        kv_in = q_in if kv is x else ops.layer_norm(kv, g, b, self.cfg.ln_eps)
        z, attn = self._mha(q_in, kv_in, pre)
        phi = stop_gradient(attn).data.mean(axis=1)
        return z, AttentionRecord(layer, phi)

    def _mha(self, q_in: Tensor, kv_in: Tensor, pre: str) -> tuple[Tensor, Tensor]:
        bsz, n, d = q_in.shape
        m = kv_in.shape[1]
        h, dh = self.cfg.heads, self.cfg.head_dim

        def heads(t: Tensor, count: int) -> Tensor:
            return ops.transpose(ops.reshape(t, (bsz, count, h, dh)), (0, 2, 1, 3))

        q = heads(q_in @ self[f"{pre}.attn.wq"], n)
        k = heads(kv_in @ self[f"{pre}.attn.wk"], m)
        v = heads(kv_in @ self[f"{pre}.attn.wv"], m)
        scores = ops.matmul(q, ops.transpose(k)) * (1.0 / math.sqrt(dh))
        attn = ops.softmax_rows(scores)
        z = ops.reshape(ops.transpose(ops.matmul(attn, v), (0, 2, 1, 3)), (bsz, n, d))
        return z @ self[f"{pre}.attn.wo"] + self[f"{pre}.attn.bo"], attn

    def mlp(self, x: Tensor, layer: int) -> Tensor:
        pre = f"layer.{layer}"
        hdn = ops.layer_norm(x, self[f"{pre}.ln2.g"], self[f"{pre}.ln2.b"], self.cfg.ln_eps)
        hdn = ops.gelu(hdn @ self[f"{pre}.mlp.w1"] + self[f"{pre}.mlp.b1"])
        return hdn @ self[f"{pre}.mlp.w2"] + self[f"{pre}.mlp.b2"]

    def block(self, x: Tensor, layer: int, kv: Optional[Tensor] = None) -> tuple[Tensor, AttentionRecord]:
        z, rec = self.attention_layer(x, kv, layer)
        x = x + z
        return x + self.mlp(x, layer), rec

    def sequence_pool_classify(self, x: Tensor) -> Tensor:
        """Softmax-weighted token average followed by the linear head, (b, n, d) -> (b, c)."""
        scores = x @ self["pool.w"] + self["pool.b"]                      # (b, n, 1)
        weights = ops.softmax(ops.transpose(scores), axis=-1)              # (b, 1, n)
        pooled = ops.reshape(ops.matmul(weights, x), (x.shape[0], x.shape[2]))
        return pooled @ self["head.w"] + self["head.b"]

    def classify(self, x: Tensor) -> Tensor:
        return self.sequence_pool_classify(ops.layer_norm(x, self["norm.g"], self["norm.b"], self.cfg.ln_eps))

    def encoder_forward(self, x: Tensor, hooks: Optional[Mapping[int, Hook]] = None,
                        start_layer: int = 1) -> ForwardTrace:
        """Run layers ``start_layer..depth``; a hook sees a layer's input and may replace it.

        A hook returns new tokens, or ``(tokens, kv)`` to also swap the layer's
        key/value set.  The trace keeps the pre-hook input of every layer.
        """
        hooks = hooks or {}
        for layer in hooks:
            if not 1 <= layer <= self.cfg.depth:
                raise ConfigError(f"hook on nonexistent layer {layer}")
        trace = ForwardTrace(tokens=x)
        for layer in range(start_layer, self.cfg.depth + 1):
            trace.snapshots.append(x)
            kv = None
            if layer in hooks:
                out = hooks[layer](x, trace)
                new_x, kv = out if isinstance(out, tuple) else (out, None)
                if new_x.shape != x.shape:
                    raise ShapeError(f"hook at layer {layer} returned {new_x.shape}, expected {x.shape}")
                x = new_x
            trace.layer_inputs.append(x)
            x, rec = self.block(x, layer, kv)
            trace.records.append(rec)
        trace.logits = self.classify(x)
        return trace

    def forward(self, images, hooks: Optional[Mapping[int, Hook]] = None) -> ForwardTrace:
        return self.encoder_forward(self.tokenize_patches(images), hooks)

    def probe_attention(self, x: Tensor, layer: int, steps: int = 0) -> list[np.ndarray]:
        """Stop-gradient attention maps of layers ``layer..layer+steps`` starting from tokens ``x``."""
        maps = []
        with no_grad():
            h = stop_gradient(x)
            for i in range(layer, layer + steps + 1):
                z, rec = self.attention_layer(h, None, i)
                maps.append(rec.phi)
                if i < layer + steps:
                    h = h + z
                    h = h + self.mlp(h, i)
        return maps


def tokenize_patches(model: Transformer, images) -> Tensor:
    return model.tokenize_patches(images)


def attention_layer(model: Transformer, x: Tensor, kv: Optional[Tensor], layer: int):
    return model.attention_layer(x, kv, layer)


def encoder_forward(model: Transformer, x: Tensor, hooks: Optional[Mapping[int, Hook]] = None) -> ForwardTrace:
    return model.encoder_forward(x, hooks)


def sequence_pool_classify(model: Transformer, x: Tensor) -> Tensor:
    return model.sequence_pool_classify(x)

