"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 numeric divergence.
"""
import argparse
import json
import os
import sys

from .codebook import memory_report
from .errors import ConfigError, DataFormatError, NumericError
from .pipeline import (config_from_dict, evaluate_accuracy, export_coefficients,
                       load_splits, run_cluster_stage, run_finetune, run_pipeline,
                       run_training)
from .serialize import load_model, save_model


def _load_config(args):
    d = {}
    if args.config:
        try:
            with open(args.config) as f:
                d = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "scheme", None):
        d["scheme"] = args.scheme
    if getattr(args, "dataset", None):
        d["dataset"] = args.dataset
    return config_from_dict(d)


def _write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def _log(msg):
    print(msg, flush=True)


def cmd_train(args):
    cfg = _load_config(args)
    train_ds, val_ds, test_ds = load_splits(cfg, args.data_dir)
    model, record = run_training(cfg, train_ds, val_ds, log=_log)
    record["test_accuracy"] = evaluate_accuracy(model, test_ds)
    save_model(model, args.out)
    _write_json(args.out + ".record.json", record)
    _log(f"saved checkpoint to {args.out} "
         f"(val={record['val_accuracy']:.4f}, test={record['test_accuracy']:.4f})")


def cmd_cluster(args):
    cfg = _load_config(args)
    model = load_model(args.checkpoint)
    clustered, record = run_cluster_stage(model, cfg, log=_log)
    save_model(clustered, args.out)
    _write_json(args.out + ".memory.json", record["memory"])
    _log(f"saved clustered checkpoint to {args.out} "
         f"({record['memory']['total_kb']:.2f} KB)")


def cmd_finetune(args):
    cfg = _load_config(args)
    model = load_model(args.checkpoint)
    train_ds, val_ds, _ = load_splits(cfg, args.data_dir)
    model, record = run_finetune(model, cfg, train_ds, val_ds, log=_log)
    save_model(model, args.out)
    _write_json(args.out + ".record.json", record)
    _log(f"saved fine-tuned checkpoint to {args.out}")


def cmd_eval(args):
    cfg = _load_config(args)
    model = load_model(args.checkpoint)
    train_ds, val_ds, test_ds = load_splits(cfg, args.data_dir)
    payload = {
        "val_accuracy": evaluate_accuracy(model, val_ds),
        "test_accuracy": evaluate_accuracy(model, test_ds),
    }
    print(json.dumps(payload, indent=2))


def cmd_report(args):
    model = load_model(args.checkpoint)
    payload = memory_report(model).to_dict()
    if args.out:
        _write_json(args.out, payload)
    print(json.dumps(payload, indent=2))


def cmd_export_coeffs(args):
    model = load_model(args.checkpoint)
    export_coefficients(model, args.out)
    _log(f"wrote coefficient rows to {args.out}")


def cmd_pipeline(args):
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    model, record = run_pipeline(cfg, args.data_dir, log=_log)
    ckpt = os.path.join(args.out, f"{cfg.scheme}.kanc")
    save_model(model, ckpt)
    _write_json(os.path.join(args.out, f"{cfg.scheme}.record.json"), record)
    _write_json(os.path.join(args.out, f"{cfg.scheme}.memory.json"), record["memory"])
    _log(f"pipeline finished; outputs in {args.out}")


def build_parser():
    p = argparse.ArgumentParser(
        prog="kanzip",
        description="Train, cluster-compress, and evaluate KAN models.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **need):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--scheme", help="scheme name, e.g. MetaClusterKAN")
        sp.add_argument("--dataset", help="mnist | cifar10 | cifar100")
        if need.get("data"):
            sp.add_argument("--data-dir", required=True,
                            help="directory holding the raw dataset files")
        if need.get("ckpt"):
            sp.add_argument("--checkpoint", required=True, help="KANC checkpoint")
        if need.get("out"):
            sp.add_argument("--out", required=need["out"] == "req")
        sp.set_defaults(fn=fn)
        return sp

    add("train", cmd_train, data=True, out="req")
    add("cluster", cmd_cluster, ckpt=True, out="req")
    add("finetune", cmd_finetune, data=True, ckpt=True, out="req")
    add("eval", cmd_eval, data=True, ckpt=True)
    add("report", cmd_report, ckpt=True, out="opt")
    add("export-coeffs", cmd_export_coeffs, ckpt=True, out="req")
    add("pipeline", cmd_pipeline, data=True, out="req")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
