"""Per-epoch metric rows, their CSV form, and the curriculum summary."""
from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import UsageError

HEADER = ("epoch", "split", "loss", "accuracy", "scorenet_loss", "num_mixed",
          "mean_tokens_replaced", "realized_gain", "wall_ms")


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    split: str
    loss: float
    accuracy: float
    scorenet_loss: float = 0.0
    num_mixed: float = 0.0
    mean_tokens_replaced: float = 0.0
    realized_gain: float = 0.0
    wall_ms: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.num_mixed < 0 or self.mean_tokens_replaced < 0:
            raise ValueError("counts must be non-negative")


def format_rows(rows: Iterable[MetricsRow]) -> str:
    out = [",".join(HEADER)]
    for r in rows:
        cells = []
        for value in astuple(r):
            if isinstance(value, float):
                cells.append(f"{value:.6f}")
            else:
                cells.append(str(value))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def emit_metrics_csv(rows: Iterable[MetricsRow], path: str | Path) -> None:
    data = format_rows(rows).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(data)


def parse_metrics_csv(text: str) -> list[MetricsRow]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != HEADER:
        raise ValueError(f"unexpected metrics header {reader.fieldnames}")
    rows = []
    for rec in reader:
        kw = {}
        for f in fields(MetricsRow):
            raw = rec[f.name]
            kw[f.name] = int(raw) if f.name == "epoch" else raw if f.name == "split" else float(raw)
        rows.append(MetricsRow(**kw))
    return rows


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    return parse_metrics_csv(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class CurriculumSummary:
    early_mean: float
    late_mean: float
    rising: bool


def curriculum_trace(metrics: Sequence[MetricsRow], min_epochs: int = 9) -> CurriculumSummary:
    """Compare mixed-sample counts in the first and last third of training epochs."""
    train = sorted((r for r in metrics if r.split == "train"), key=lambda r: r.epoch)
    if len(train) < min_epochs:
        raise UsageError(f"need at least {min_epochs} training epochs, got {len(train)}")
    third = len(train) // 3
    early = sum(r.num_mixed for r in train[:third]) / third
    late = sum(r.num_mixed for r in train[-third:]) / third
    return CurriculumSummary(early, late, late > early)
