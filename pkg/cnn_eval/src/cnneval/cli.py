"""Command line entry points: cnn-eval train | evaluate.

Both subcommands accept --config FILE with JSON that adjusts flag
defaults; explicit flags still win.  The file may be flat or use
"model" / "training" sections, which are flattened.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from cnneval.metrics import (
    evaluate,
    save_confusion_figure,
    write_confusion_csv,
    write_metrics_csv,
)
from cnneval.model import CnnConfig, ModelConfigError, N_FAULT_TYPES, build_model, param_count
from cnneval.pmud import PmudFormatError, read_pmud
from cnneval.train import TrainConfig, train

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_TRAINING = 3

CHECKPOINT_FORMAT = "cnneval-checkpoint"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cnn-eval",
        description="train and score the dual-head waveform classifier",
    )
    parser.add_argument("--config", metavar="FILE",
                        help="JSON file whose values become flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("train", help="fit a model on a PMUD tensor")
    fit.add_argument("--train", required=True, help="training tensor (.pmud)")
    fit.add_argument("--val", help="validation tensor scored after each epoch")
    fit.add_argument("--output", default="model.pt", help="checkpoint file to write")
    fit.add_argument("--history", help="per-epoch CSV (default: alongside the checkpoint)")
    fit.add_argument("--epochs", type=int, default=60)
    fit.add_argument("--batch-size", type=int, default=128)
    fit.add_argument("--learning-rate", type=float, default=5e-4)
    fit.add_argument("--weight-decay", type=float, default=1e-6)
    fit.add_argument("--lr-decay", type=float, default=0.987,
                     help="per-epoch exponential learning-rate factor")
    fit.add_argument("--dropout", type=float, default=0.5)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--quiet", action="store_true", help="suppress per-epoch lines")
    fit.set_defaults(func=cmd_train)

    score = sub.add_parser("evaluate", help="score a checkpoint on a held-out tensor")
    score.add_argument("--model", required=True, help="checkpoint from cnn-eval train")
    score.add_argument("--test", required=True, help="held-out tensor (.pmud)")
    score.add_argument("--output-dir", default=".", help="where to write metric files")
    score.add_argument("--batch-size", type=int, default=256)
    score.set_defaults(func=cmd_evaluate)

    parser.command_parsers = dict(sub.choices)
    return parser


_CONFIG_SECTIONS = {"model", "training"}
_CONFIG_KEYS = {
    "train", "val", "test", "model", "output", "output_dir", "history",
    "epochs", "batch_size", "learning_rate", "weight_decay", "lr_decay",
    "dropout", "seed", "quiet",
}


def _load_config_defaults(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="ascii"))
    except FileNotFoundError:
        raise PmudFormatError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise PmudFormatError(f"{path}: not valid JSON ({exc})") from None
    flat: dict = {}
    for key, value in raw.items():
        if key in _CONFIG_SECTIONS:
            if not isinstance(value, dict):
                raise PmudFormatError(f"{path}: section {key!r} must be an object")
            flat.update(value)
        else:
            flat[key] = value
    for key in flat:
        if key not in _CONFIG_KEYS:
            raise PmudFormatError(f"{path}: unknown config key {key!r}")
    return flat


def _label_names(meta: dict, checkpoint: dict | None, key: str, count: int,
                 prefix: str) -> list[str]:
    names = meta.get(key)
    if not names and checkpoint is not None:
        names = checkpoint.get(key)
    if isinstance(names, list) and len(names) == count:
        return [str(v) for v in names]
    return [f"{prefix}{i}" for i in range(count)]


def cmd_train(args: argparse.Namespace) -> int:
    train_set = read_pmud(args.train)
    val_set = read_pmud(args.val) if args.val else None
    config = CnnConfig(
        d=train_set.width,
        n_loc=train_set.n_loc,
        timesteps=train_set.timesteps,
        dropout=args.dropout,
    )
    # seed before construction so the initial weights are reproducible too
    torch.manual_seed(args.seed)
    model = build_model(config)
    table = param_count(model)
    print(f"model: d={config.d} n_loc={config.n_loc} "
          f"timesteps={config.timesteps} parameters={table['total']}")
    schedule = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        weight_decay=args.weight_decay,
        lr_decay=args.lr_decay,
        seed=args.seed,
    )
    history = train(model, train_set, schedule, val_set)
    if not args.quiet:
        for epoch in range(len(history)):
            line = (f"epoch {epoch + 1}/{schedule.epochs} "
                    f"lr {history.lr[epoch]:.3e} "
                    f"loss {history.loss_type[epoch]:.4f}+{history.loss_loc[epoch]:.4f}")
            if history.val_type_accuracy:
                line += (f" val {history.val_type_accuracy[epoch]:.3f}"
                         f"/{history.val_loc_accuracy[epoch]:.3f}")
            print(line)

    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": 1,
            "d": config.d,
            "n_loc": config.n_loc,
            "timesteps": config.timesteps,
            "dropout": config.dropout,
            "state_dict": model.state_dict(),
            "fault_types": train_set.meta.get("fault_types"),
            "line_ids": train_set.meta.get("line_ids"),
        },
        out,
    )
    history_path = Path(args.history) if args.history else out.with_suffix(".history.csv")
    _write_history(history_path, history)
    print(f"wrote {out} and {history_path}")
    return EXIT_OK


def _write_history(path: Path, history) -> None:
    with open(path, "w") as handle:
        columns = ["epoch", "lr", "loss_type", "loss_loc"]
        if history.val_type_accuracy:
            columns += ["val_type_accuracy", "val_loc_accuracy"]
        handle.write(",".join(columns) + "\n")
        for epoch in range(len(history)):
            row = [str(epoch), f"{history.lr[epoch]:.10e}",
                   f"{history.loss_type[epoch]:.10e}", f"{history.loss_loc[epoch]:.10e}"]
            if history.val_type_accuracy:
                row += [f"{history.val_type_accuracy[epoch]:.6f}",
                        f"{history.val_loc_accuracy[epoch]:.6f}"]
            handle.write(",".join(row) + "\n")


def _load_checkpoint(path: str) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise PmudFormatError(f"checkpoint not found: {path}") from None
    except Exception as exc:
        raise PmudFormatError(f"{path}: not a readable checkpoint ({exc})") from None
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise PmudFormatError(f"{path}: not a cnn-eval checkpoint")
    return payload


def cmd_evaluate(args: argparse.Namespace) -> int:
    payload = _load_checkpoint(args.model)
    config = CnnConfig(
        d=int(payload["d"]),
        n_loc=int(payload["n_loc"]),
        timesteps=int(payload["timesteps"]),
        dropout=float(payload["dropout"]),
    )
    model = build_model(config)
    model.load_state_dict(payload["state_dict"])
    test_set = read_pmud(args.test)
    if test_set.timesteps != config.timesteps or test_set.width != config.d:
        raise ValueError(
            f"test set shape ({test_set.timesteps} timesteps, {test_set.width} features) "
            f"does not match the model ({config.timesteps} timesteps, {config.d} features)"
        )
    report = evaluate(model, test_set, batch_size=args.batch_size)

    type_names = _label_names(test_set.meta, payload, "fault_types",
                              N_FAULT_TYPES, "type_")
    loc_names = _label_names(test_set.meta, payload, "line_ids",
                             config.n_loc, "loc_")
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / "metrics.csv", report)
    write_confusion_csv(out_dir / "confusion_fault_type.csv",
                        report.fault_type.confusion, type_names)
    write_confusion_csv(out_dir / "confusion_location.csv",
                        report.location.confusion, loc_names)
    save_confusion_figure(out_dir / "confusion_fault_type.png",
                          report.fault_type.confusion, type_names, "fault type")
    save_confusion_figure(out_dir / "confusion_location.png",
                          report.location.confusion, loc_names, "fault location")

    for head, m in (("fault type", report.fault_type), ("location", report.location)):
        print(f"{head}: accuracy {m.accuracy:.4f} precision {m.precision:.4f} "
              f"recall {m.recall:.4f} f1 {m.f1:.4f} specificity {m.specificity:.4f}")
    print(f"wrote metrics and confusion tables to {out_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        # same convention as the upstream toolchain: the config file only
        # adjusts defaults, and because subcommands parse into their own
        # namespace the defaults must land on every subparser
        if "--config" in argv:
            at = argv.index("--config")
            if at + 1 >= len(argv):
                parser.error("--config needs a file path")
            defaults = _load_config_defaults(argv[at + 1])
            del argv[at : at + 2]
            for command in parser.command_parsers.values():
                command.set_defaults(**defaults)
                for action in command._actions:
                    if action.required and action.dest in defaults:
                        action.required = False
        args = parser.parse_args(argv)
        return args.func(args)
    except RuntimeError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (PmudFormatError, ModelConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
