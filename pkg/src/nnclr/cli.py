"""Operator surface: pretrain / eval / ablate / gradcheck / report.

Exit codes: 2 config validation failure, 3 runtime abort, 4 checkpoint
format or version mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import gradcheck as gradcheck_mod
from . import report as report_mod
from .config import DataConfig, TrainConfig, load_config
from .checkpoint import load_checkpoint, restore_model
from .errors import CheckpointFormatError, ConfigError, NnclrError, NonFiniteGradient
from .evaluation import ProbeConfig, linear_probe
from .runs import build_datasets, finish_manifest, pretrain_and_probe, write_manifest
from .train import pretrain

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECKPOINT = 4


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(item, "--set expects key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_data_spec(spec: str) -> DataConfig:
    """Dataset spec strings: "blobs:key=value,..." or "cifar10:<dir>"."""
    kind, _, rest = spec.partition(":")
    if kind == "cifar10":
        return DataConfig(kind="cifar10", path=rest)
    if kind != "blobs":
        raise ConfigError("data", f"unknown dataset kind {kind!r}")
    dcfg = DataConfig(kind="blobs")
    for item in filter(None, rest.split(",")):
        key, _, value = item.partition("=")
        if not hasattr(dcfg, key):
            raise ConfigError(f"data.{key}", "unknown dataset key")
        current = getattr(dcfg, key)
        setattr(dcfg, key, type(current)(value) if not isinstance(current, bool)
                else value.lower() in ("1", "true", "on", "yes"))
    return dcfg


# ---- subcommands ----

def cmd_pretrain(args) -> int:
    overrides = _parse_overrides(args.set or [])
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    cfg = load_config(args.config, overrides)
    run_dir = args.out or f"runs/{cfg.objective}_seed{cfg.seed}"
    write_manifest(run_dir, cfg, overrides)
    train, _ = build_datasets(cfg.data)
    try:
        pretrain(cfg, train, run_dir=run_dir)
    except NonFiniteGradient as exc:
        print(f"aborted: non-finite gradient at {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finish_manifest(run_dir)
    print(run_dir)
    return 0


def cmd_eval(args) -> int:
    payload = load_checkpoint(args.checkpoint)
    model = restore_model(payload)
    dcfg = parse_data_spec(args.data)
    train, test = build_datasets(dcfg)
    result = linear_probe(model, train, test,
                          ProbeConfig(epochs=args.probe_epochs,
                                      label_fraction=args.label_fraction,
                                      seed=args.seed))
    result["checkpoint"] = args.checkpoint
    result["step"] = payload["step"]
    print(json.dumps(result))
    return 0


AXES = ("queue_size", "top_k", "batch_size", "embed_dim", "nn_kind",
        "pred_head", "augment_mode", "replacement")

_ON_OFF = {"on": True, "off": False}


def apply_axis(cfg: TrainConfig, axis: str, value: str) -> None:
    if axis == "queue_size":
        cfg.queue_size = int(value)
    elif axis == "top_k":
        cfg.top_k = int(value)
    elif axis == "batch_size":
        cfg.batch_size = int(value)
    elif axis == "embed_dim":
        d = int(value)
        cfg.encoder.projection_dims = cfg.encoder.projection_dims[:-1] + [d]
        cfg.encoder.prediction_dims = cfg.encoder.prediction_dims[:-1] + [d]
    elif axis == "nn_kind":
        cfg.nn_kind = value
    elif axis == "pred_head":
        cfg.use_prediction_head = _ON_OFF[value]
    elif axis == "augment_mode":
        cfg.augment.mode = value
    elif axis == "replacement":
        cfg.replacement = value
    else:
        raise ConfigError("axis", f"must be one of {AXES}")
    cfg.validate()


def _ablate_one(task: tuple) -> dict:
    config_path, overrides, axis, value, out_dir = task
    row = {"axis_value": value, "top1": None, "final_loss": None,
           "final_nn_match": None, "steps_per_sec": None,
           "queue_bytes": None, "error": ""}
    try:
        cfg = load_config(config_path, overrides)
        apply_axis(cfg, axis, value)
        run_dir = os.path.join(out_dir, f"{axis}_{value}")
        write_manifest(run_dir, cfg, overrides)
        summary = pretrain_and_probe(cfg, run_dir=run_dir)
        finish_manifest(run_dir)
        row.update({k: summary[k] for k in
                    ("top1", "final_loss", "final_nn_match",
                     "steps_per_sec", "queue_bytes")})
    except Exception as exc:  # partial failures become marked rows
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_ablate(args) -> int:
    overrides = _parse_overrides(args.set or [])
    load_config(args.config, overrides)  # fail fast on a bad base config
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    out_dir = args.out or f"ablations/{args.axis}"
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(args.config, overrides, args.axis, v, out_dir) for v in values]
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            rows = list(pool.map(_ablate_one, tasks))
    else:
        rows = [_ablate_one(t) for t in tasks]

    csv_path = os.path.join(out_dir, "ablation.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    fig_path = report_mod.render_ablation(rows, args.axis,
                                          os.path.join(out_dir, "ablation.png"))
    print(csv_path)
    print(fig_path)
    return 0


def cmd_gradcheck(args) -> int:
    results = gradcheck_mod.run_suite(args.seeds)
    failed = False
    for name, err in results.items():
        status = "ok" if err < gradcheck_mod.TOLERANCE else "FAIL"
        if status == "FAIL":
            failed = True
        print(f"{name:24s} worst rel err {err:.3e}  {status}")
    return 1 if failed else 0


def cmd_report(args) -> int:
    for path in report_mod.render_metrics(args.run, args.out):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnclr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="run self-supervised pretraining")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default=None, help="run directory")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("eval", help="linear probe on a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="blobs:k=v,... or cifar10:<dir>")
    p.add_argument("--label-fraction", type=float, default=1.0, dest="label_fraction")
    p.add_argument("--probe-epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="sweep one config axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--values", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default=None)
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="render figures + summary for a run")
    p.add_argument("--run", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointFormatError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except NnclrError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
