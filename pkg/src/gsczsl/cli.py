"""Command-line entry point: ``gsczsl <subcommand> ...``.

Exit codes: 0 success, 1 validation error, 2 usage error, 3 gradient check failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import data as io
from . import gradcheck
from .evaluation import ClassPartition, evaluate_zsl, gzsl_sweep, parse_gamma_grid
from .model import HeadConfig, predict_scores
from .numerics import ValidationError
from .semantics import column_normalize_attributes
from .training import TrainConfig, fit

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_GRADCHECK = 0, 1, 2, 3

# CLI flag -> TrainConfig field
OVERRIDES = {
    "seed": "seed", "mode": "mode", "loss": "loss", "alpha": "alpha", "beta": "beta",
    "eta": "eta", "gamma_grid": "gamma_grid", "lr": "learning_rate",
    "weight_decay": "weight_decay", "epochs": "epochs_max", "batch_size": "batch_size",
    "patience": "patience", "k_scale": "k_scale",
}


def _train_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="key = value TrainConfig file")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=["gsc", "sc"])
    p.add_argument("--loss", choices=["onehot", "sle"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--eta", type=float, help="dropout keep ratio")
    p.add_argument("--gamma-grid", type=parse_gamma_grid, help="start:stop:count or comma list")
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--k-scale", type=int)
    p.add_argument("--no-normalize", action="store_true",
                   help="use raw attribute columns in the GSC layer")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gsczsl", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a planted synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-tr", type=int, default=20)
    p.add_argument("--n-ts", type=int, default=10)
    p.add_argument("--attributes", type=int, default=16, dest="L")
    p.add_argument("--features", type=int, default=64, dest="D")
    p.add_argument("--samples-per-class", type=int, default=50)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a head: dataset -> checkpoint + history CSV")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--history", type=Path, help="history CSV (default: <out>.history.csv)")
    p.add_argument("--save-config", type=Path)
    _train_flags(p)

    for name, what in (("eval-zsl", "ZSL per-class accuracy on unseen test samples"),
                       ("eval-gzsl", "GZSL gamma sweep over both test splits")):
        p = sub.add_parser(name, help=what)
        p.add_argument("--checkpoint", type=Path, required=True)
        p.add_argument("--data", type=Path, required=True)
        p.add_argument("--out", type=Path, required=True, help="report CSV")
        if name == "eval-gzsl":
            p.add_argument("--gamma-grid", type=parse_gamma_grid, default="1.0:2.0:21")

    p = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    p.add_argument("--seed", type=int, default=1)

    p = sub.add_parser("export-weights", help="write the GSC-layer weight as CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", type=Path)
    src.add_argument("--attributes", type=Path)
    p.add_argument("--out", type=Path, required=True)
    return ap


def config_from_args(args) -> TrainConfig:
    base = TrainConfig.from_text(args.config.read_text()) if args.config else TrainConfig()
    kw = asdict(base)
    for flag, key in OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            kw[key] = val
    if getattr(args, "no_normalize", False):
        kw["normalize_attributes"] = False
    return TrainConfig(**kw)


def cmd_synth(args):
    spec = io.SynthSpec(args.n_tr, args.n_ts, args.L, args.D, args.samples_per_class,
                        args.sigma, args.seed)
    task = io.generate_synthetic(spec)
    io.save_dataset(args.out, task.bundle)
    print(f"wrote {len(task.bundle.labels)} samples to {args.out}")
    print(f"nearest-mean oracle unseen accuracy: {io.nearest_mean_accuracy(task):.4f}")


def _layer(attr, normalize: bool):
    return column_normalize_attributes(attr) if normalize else attr


def cmd_train(args):
    cfg = config_from_args(args)
    bundle = io.load_dataset(args.data)
    attr = _layer(bundle.attr, cfg.normalize_attributes)
    params, history = fit(attr, *bundle.split("train"), *bundle.split("val"), config=cfg)
    head = HeadConfig(bundle.features.shape[1], attr.attributes_dim, cfg.eta, cfg.mode)
    io.save_checkpoint(args.out, io.Checkpoint(head, params, attr, cfg.seed, asdict(cfg)))
    hist_path = args.history or args.out.with_name(args.out.name + ".history.csv")
    hist_path.write_text(history.to_csv())
    if args.save_config:
        args.save_config.write_text(cfg.to_text())
    best = history.records[history.best_epoch - 1]
    print(f"trained {len(history)} epochs, best epoch {history.best_epoch} "
          f"(val per-class accuracy {best.val_acc:.4f})")
    for note in history.notes:
        print(f"note: {note}")


def _load_for_eval(args):
    ckpt = io.load_checkpoint(args.checkpoint)
    bundle = io.load_dataset(args.data, feature_dim=ckpt.head.feature_dim)
    attr = _layer(bundle.attr, ckpt.config.get("normalize_attributes", True))
    if attr.digest() != ckpt.attr.digest():
        raise ValidationError("dataset attribute matrix differs from the checkpoint's GSC layer")
    part = ClassPartition.from_counts(attr.n_seen, attr.n_unseen)
    return ckpt, bundle, attr, part


def cmd_eval_zsl(args):
    ckpt, bundle, attr, part = _load_for_eval(args)
    x, y = bundle.split("test_unseen")
    if len(y) == 0:
        raise ValidationError("dataset has no test_unseen samples")
    report = evaluate_zsl(predict_scores(ckpt.params, attr, x), y, part)
    args.out.write_text(report.zsl_csv(attr.class_names))
    print(report.summary())


def cmd_eval_gzsl(args):
    ckpt, bundle, attr, part = _load_for_eval(args)
    x, y = bundle.split("test_seen", "test_unseen")
    report = gzsl_sweep(predict_scores(ckpt.params, attr, x), y, part, args.gamma_grid)
    args.out.write_text(report.gzsl_csv())
    print(report.summary())


def cmd_gradcheck(args):
    results = gradcheck.run_suite(args.seed)
    for r in results:
        print(f"eta={r.eta}: max relative error {r.max_rel_error:.3e} at {r.worst}")
    worst = max(r.max_rel_error for r in results)
    print(f"max relative error {worst:.3e} (tolerance {gradcheck.TOLERANCE:.0e})")
    return EXIT_OK if worst <= gradcheck.TOLERANCE else EXIT_GRADCHECK


def cmd_export(args):
    if args.checkpoint:
        io.export_gsc_weight(args.checkpoint, args.out)
    else:
        io.export_gsc_weight(io.read_attributes(args.attributes), args.out)
    print(f"wrote {args.out}")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval-zsl": cmd_eval_zsl,
            "eval-gzsl": cmd_eval_gzsl, "gradcheck": cmd_gradcheck,
            "export-weights": cmd_export}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args) or EXIT_OK
    except ValidationError as e:
        print(f"error: {e.kind}: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
