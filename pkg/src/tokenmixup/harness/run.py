"""Training and evaluation loops over the synthetic task."""
from __future__ import annotations

import logging
import time
from pathlib import Path

import numpy as np

from .. import numerics as nx
from ..training import predict, train_step
from ..transformer import Transformer
from .config import RunConfig, dump_config
from .data import Split, generate_synthetic_dataset
from .metrics import MetricsRow, emit_metrics_csv
from .rng import stream

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
CHECKPOINT_FILE = "checkpoint.tkmx"


def build_model(cfg: RunConfig) -> Transformer:
    return Transformer(cfg.effective_model, stream(cfg.seed, "init"))


def evaluate(model: Transformer, split: Split, classes: int, batch_size: int = 256) -> tuple[float, float]:
    losses, correct = [], 0
    for start in range(0, len(split), batch_size):
        sl = slice(start, start + batch_size)
        logits = predict(model, split.images[sl])
        y = split.one_hot(classes, np.arange(len(split))[sl])
        losses.append(nx.ops.cross_entropy(nx.Tensor(logits), y).data)
        correct += int((logits.argmax(axis=1) == split.labels[sl]).sum())
    return float(np.concatenate(losses).mean()), correct / len(split)


def train_epoch(model, optimizer, train: Split, cfg: RunConfig, epoch: int,
                shuffle_rng, mix_rng, stats: dict) -> MetricsRow:
    t0 = time.perf_counter()
    order = shuffle_rng.permutation(len(train))
    classes = cfg.model.num_classes
    reports = []
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        rep = train_step(model, train.images[idx], train.one_hot(classes, idx), optimizer,
                         variant=cfg.htm_variant, rng=mix_rng, random_k=cfg.random_k)
        reports.append(rep)
        for key, count in rep.hook_calls.items():
            stats[key] = stats.get(key, 0) + count
    stats["steps"] = stats.get("steps", 0) + len(reports)
    stats["mixed_samples"] = stats.get("mixed_samples", 0) + sum(r.num_mixed for r in reports)
    mixed = sum(r.num_mixed for r in reports)
    wall = (time.perf_counter() - t0) * 1000.0 if cfg.timing else 0.0
    return MetricsRow(
        epoch=epoch,
        split="train",
        loss=float(np.mean([r.loss for r in reports])),
        accuracy=sum(r.correct for r in reports) / len(train),
        scorenet_loss=float(np.mean([r.scorenet_loss for r in reports])),
        num_mixed=mixed / len(reports),
        mean_tokens_replaced=sum(r.tokens_replaced for r in reports) / mixed if mixed else 0.0,
        realized_gain=float(np.mean([r.realized_gain for r in reports])),
        wall_ms=wall,
    )


def run_training(cfg: RunConfig, write: bool = True, data=None) -> tuple[list[MetricsRow], Transformer]:
    """Train for ``cfg.epochs``; write metrics CSV and checkpoint into ``cfg.out_dir``."""
    train, val = data or generate_synthetic_dataset(cfg)
    model = build_model(cfg)
    optimizer = nx.SGD(model.parameters(), cfg.lr, cfg.momentum)
    shuffle_rng, mix_rng = stream(cfg.seed, "shuffle"), stream(cfg.seed, "mixup")
    rows: list[MetricsRow] = []
    stats: dict = {}
    for epoch in range(1, cfg.epochs + 1):
        row = train_epoch(model, optimizer, train, cfg, epoch, shuffle_rng, mix_rng, stats)
        t0 = time.perf_counter()
        val_loss, val_acc = evaluate(model, val, cfg.model.num_classes)
        wall = (time.perf_counter() - t0) * 1000.0 if cfg.timing else 0.0
        rows.append(row)
        rows.append(MetricsRow(epoch, "val", val_loss, val_acc, wall_ms=wall))
        log.info("epoch %d loss %.4f val_acc %.3f mixed/batch %.2f", epoch, row.loss, val_acc, row.num_mixed)
    if write:
        out = Path(cfg.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            emit_metrics_csv(rows, out / METRICS_FILE)
            model.save(out / CHECKPOINT_FILE)
            (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write run outputs to {out}: {exc}") from exc
    model.run_stats = stats
    return rows, model
