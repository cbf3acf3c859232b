"""Synthetic class-conditional image task standing in for a real dataset."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .rng import stream


@dataclass
class Split:
    images: np.ndarray   # (N, 1, s, s) float32
    labels: np.ndarray   # (N,) int64

    def __len__(self) -> int:
        return len(self.labels)

    def one_hot(self, classes: int, idx=None) -> np.ndarray:
        lab = self.labels if idx is None else self.labels[idx]
        return np.eye(classes, dtype=np.float32)[lab]


def class_templates(classes: int, size: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Distinct spatial patterns in [0, 1], one per class: quadrants, stripes, checks, blobs."""
    h = size // 2
    yy, xx = np.mgrid[0:size, 0:size]
    fixed = []
    for qy, qx in ((0, 0), (0, 1), (1, 0), (1, 1)):
        t = np.zeros((size, size))
        t[qy * h:(qy + 1) * h, qx * h:(qx + 1) * h] = 1.0
        fixed.append(t)
    period = max(size // 4, 2)
    fixed.append(((yy // (period // 2)) % 2 == 0).astype(float))
    fixed.append(((xx // (period // 2)) % 2 == 0).astype(float))
    fixed.append((((yy // period) + (xx // period)) % 2 == 0).astype(float))
    c = (size - 1) / 2
    fixed.append(((np.abs(yy - c) < size / 4) & (np.abs(xx - c) < size / 4)).astype(float))
    fixed.append((np.abs(yy - xx) < size / 4).astype(float))
    fixed.append((np.abs(yy + xx - (size - 1)) < size / 4).astype(float))
    out = fixed[:classes]
    if classes > len(fixed):
        rng = rng or np.random.default_rng(12345)
        cells = max(size // 4, 1)
        while len(out) < classes:
            coarse = (rng.random((cells, cells)) < 0.5).astype(float)
            t = np.kron(coarse, np.ones((size // cells, size // cells)))
            if not any(np.array_equal(t, o) for o in out):
                out.append(t)
    return np.stack(out).astype(np.float32)


def generate_synthetic_dataset(cfg) -> tuple[Split, Split]:
    """Balanced templates plus Gaussian pixel noise; deterministic in the run seed; 80/20 split."""
    ds = cfg.dataset
    if ds.classes < 2:
        raise ConfigError("need at least two classes")
    rng = stream(cfg.seed, "data")
    templates = class_templates(ds.classes, ds.image_size, rng)
    per = ds.samples_per_class
    labels = np.repeat(np.arange(ds.classes), per)
    noise = rng.standard_normal((len(labels), 1, ds.image_size, ds.image_size)) * ds.noise_std
    images = (templates[labels][:, None] + noise).astype(np.float32)
    # stratified split keeps class priors identical in both halves
    n_val = per // 5
    val_mask = np.zeros(len(labels), dtype=bool)
    for k in range(ds.classes):
        members = np.flatnonzero(labels == k)
        val_mask[rng.permutation(members)[:n_val]] = True
    return Split(images[~val_mask], labels[~val_mask]), Split(images[val_mask], labels[val_mask])
