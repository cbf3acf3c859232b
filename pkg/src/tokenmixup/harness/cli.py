"""Command-line entry point: ``tokenmixup {train,bench-saliency,demo-mix,trace-curriculum}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, UsageError
from .config import MODES, RunConfig, build_config, load_config_file

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2

_OVERRIDES = ("mode", "seed", "tau", "rho", "kappa", "ell", "epochs")


class _Parser(argparse.ArgumentParser):
    """Bad flags are configuration errors, so they exit 1 rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--kappa", type=int)
    p.add_argument("--ell", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="any other config key, repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tokenmixup", description="Token-level mixup on a toy transformer: train, benchmark, inspect.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on the synthetic task, write metrics.csv + checkpoint")
    _common(p)

    p = sub.add_parser("bench-saliency", help="time attention vs gradient saliency")
    _common(p)
    p.add_argument("--repeats", type=int, default=20)

    p = sub.add_parser("demo-mix", help="print one batch's match plan, masks and relabel weights")
    _common(p)
    p.add_argument("--checkpoint", help="load weights before mixing")
    p.add_argument("--batch", type=int, default=8)

    p = sub.add_parser("trace-curriculum", help="summarise mixed-sample counts from a metrics CSV")
    p.add_argument("metrics", help="metrics.csv written by train")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config_file(args.config) if args.config else RunConfig()
    values = {}
    for key in _OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    if getattr(args, "out", None):
        values["out_dir"] = args.out
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    return build_config(values, cfg)


def cmd_train(args) -> int:
    from .run import run_training

    cfg = resolve_config(args)
    rows, _ = run_training(cfg)
    last_val = [r for r in rows if r.split == "val"][-1:] or None
    if last_val:
        print(f"final val accuracy {last_val[0].accuracy:.4f}")
    print(f"wrote {Path(cfg.out_dir) / 'metrics.csv'}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import benchmark_saliency

    cfg = resolve_config(args)
    res = benchmark_saliency(cfg, args.repeats)
    print(f"layer {res.layer}, batch {res.batch_size}")
    print(f"attention_ms {res.attention_ms:.3f}")
    print(f"gradient_ms  {res.gradient_ms:.3f}")
    print(f"random_ms    {res.random_ms:.3f}")
    print(f"ratio        {res.ratio:.2f}")
    return EXIT_OK


def cmd_demo(args) -> int:
    from .. import numerics as nx
    from ..htm import token_mixup
    from ..numerics.tensor import no_grad
    from ..scorenet import difficulty
    from ..training import hook_saliency
    from ..transformer import Transformer
    from .bench import hook_tokens
    from .data import generate_synthetic_dataset
    from .rng import stream

    cfg = resolve_config(args)
    mcfg = cfg.model.with_(htm_layer=cfg.model.htm_layer or 1)
    model = Transformer(mcfg, stream(cfg.seed, "init"), with_scorenet=True)
    if args.checkpoint:
        model.load_state_dict(nx.load_checkpoint(args.checkpoint))
    train, _ = generate_synthetic_dataset(cfg)
    idx = stream(cfg.seed, "shuffle").permutation(len(train))[:args.batch]
    images, y = train.images[idx], train.one_hot(mcfg.num_classes, idx)
    x = hook_tokens(model, images, mcfg.htm_layer)
    with no_grad():
        u = difficulty(model, x, y).data
    s = hook_saliency(model, x, mcfg.htm_layer, mcfg.ell)
    _, y_mix, rep = token_mixup(x, y, s, u, mcfg)
    np.set_printoptions(precision=4, suppress=True, linewidth=120)
    print(f"layer {mcfg.htm_layer}  tau {mcfg.tau}  rho {mcfg.rho}  batch {len(idx)}")
    print("difficulty", u)
    print("easy", list(rep.easy))
    if not rep.sigma:
        print("no easy samples; nothing mixed (raise --tau to force mixing)")
        return EXIT_OK
    print(f"realized gain {rep.realized_gain:.6f}")
    for i, j in rep.sigma.items():
        m = rep.masks[i].astype(int)
        w = rep.keep_weights[i]
        print(f"  {i} <- {j}  replaced {int(rep.tokens_replaced[i]):2d}  mask {''.join(map(str, m))}  "
              f"w_keep {w:.4f}  w_repl {1 - w:.4f}  label {y_mix[i]}")
    return EXIT_OK


def cmd_trace(args) -> int:
    from .metrics import curriculum_trace, read_metrics_csv

    summary = curriculum_trace(read_metrics_csv(args.metrics))
    print(f"early_mean {summary.early_mean:.4f}")
    print(f"late_mean  {summary.late_mean:.4f}")
    print(f"rising     {str(summary.rising).lower()}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "bench-saliency": cmd_bench, "demo-mix": cmd_demo,
            "trace-curriculum": cmd_trace}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
