"""Trainer CLI: train, predict, and the dry-run selection check."""

from __future__ import annotations

import argparse
import json
import sys

from .predict import predict
from .train import TrainerConfig, dry_run_selection, train
from .unetpp import ENCODERS


def build_parser():
    parser = argparse.ArgumentParser(prog="firecast-trainer", description="UNet++ trainer for patch shards")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train", help="train on a lead directory's shards")
    p.add_argument("--data", required=True, help="lead directory with manifest.json")
    p.add_argument("--checkpoint-dir", required=True)
    p.add_argument("--encoder", default="small-conv", choices=ENCODERS)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--base-width", type=int, default=16)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", default=None, help="JSONL epoch log path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write prediction shards for a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--splits", default="test")
    p.add_argument("--batch-size", type=int, default=8)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("dry-run", help="run checkpoint selection on injected val losses")
    p.add_argument("--val-losses", required=True, help="comma-separated losses, one per epoch")
    p.add_argument("--log", default=None)
    p.set_defaults(func=cmd_dry_run)

    return parser


def cmd_train(args):
    config = TrainerConfig(
        encoder=args.encoder,
        depth=args.depth,
        base_width=args.base_width,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        checkpoint_dir=args.checkpoint_dir,
    )
    checkpoint_path, log_entries, best_epoch = train(args.data, config, log_path=args.log)
    print(json.dumps({
        "checkpoint": str(checkpoint_path),
        "best_epoch": best_epoch,
        "final_val_loss": log_entries[-1]["val_loss"],
    }, indent=2, sort_keys=True))
    return 0


def cmd_predict(args):
    manifest = predict(args.checkpoint, args.data, args.out, splits=tuple(args.splits.split(",")),
                       batch_size=args.batch_size)
    print(json.dumps({"out": str(args.out), "splits": list(manifest["splits"])}, indent=2, sort_keys=True))
    return 0


def cmd_dry_run(args):
    losses = [float(v) for v in args.val_losses.split(",")]
    selected = dry_run_selection(losses, log_path=args.log)
    print(json.dumps({"selected_epoch": selected, "val_losses": losses}, indent=2, sort_keys=True))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}", "subcommand": args.subcommand}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
