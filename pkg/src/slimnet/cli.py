"""Command-line harness.

Subcommands: train, sweep, prune, continue, gradcheck, report. Exit codes:
0 success, 1 configuration error, 2 data/IO error, 3 numerical divergence.
Config files are JSON with ExperimentConfig keys; zero ratios are exact
rational strings like "1/8".
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, NumericalError
from .experiment import (ExperimentConfig, PRESETS, config_from_snapshot,
                         continue_training, emit_report, load_dataset, preset,
                         run_experiment, sweep_beta)
from .gradients import gradcheck_battery
from .pruning import compare_outputs, prune_network


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are config errors (exit 1)
        raise ConfigError(message)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--preset", choices=PRESETS, help="named experiment defaults")
    p.add_argument("--config", help="JSON config file with ExperimentConfig keys")
    p.add_argument("--reg", dest="reg_kind",
                   help="regularizer kind (gl, sgl, wgl, wsgl, pgl, psgl, l1, l2, none)")
    p.add_argument("--lam", type=float, help="global regularization strength")
    p.add_argument("--alpha", type=float, help="sparse-kind mixing weight")
    p.add_argument("--zero-ratio", dest="zero_ratio",
                   help='mask zero ratio as an exact rational, e.g. "1/8"')
    p.add_argument("--placement", choices=("prefix", "seeded_random"))
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--repeats", type=int, help="timing repeats per run")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--lr", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)


def _build_config(args) -> ExperimentConfig:
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    overrides = {k: v for k, v in vars(args).items()
                 if k in fields and v is not None}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                file_cfg = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad config file {args.config}: {e}") from None
        unknown = set(file_cfg) - fields
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        overrides = {**file_cfg, **overrides}
    if args.preset:
        return preset(args.preset, **overrides)
    if "dims" not in overrides:
        raise ConfigError("need --preset or a config file with dims")
    return ExperimentConfig(**overrides)


def _cmd_train(args) -> int:
    cfg = _build_config(args)
    report = run_experiment(cfg)
    out = args.out
    os.makedirs(out, exist_ok=True)
    emit_report([report], "json", out)
    emit_report([report], "table-text", out)
    save_checkpoint(os.path.join(out, "checkpoint.npz"), report.params,
                    config=report.config, metrics=report.metrics)
    print(f"train: {report.config['dataset']} {cfg.reg_kind} "
          f"train_metric={report.train_metric:.6g} test_metric={report.test_metric:.6g} "
          f"time={report.wall_time:.2f}s -> {out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    ratios = [r.strip() for r in args.ratios.split(",") if r.strip()]
    if not ratios:
        raise ConfigError("empty --ratios list")
    result = sweep_beta(cfg, ratios, repeats=args.sweep_repeats)
    out = args.out
    os.makedirs(out, exist_ok=True)
    emit_report(result.reports, "json", out)
    emit_report(result.reports, "plot-data", out)
    with open(os.path.join(out, "sweep_summary.json"), "w", encoding="utf-8") as f:
        json.dump(result.summary, f, indent=1)
    for row in result.summary:
        print(f"ratio={row['ratio']}: test_metric median={row['test_metric_median']:.6g} "
              f"mean={row['test_metric_mean']:.6g} time_mean={row['time_mean']:.2f}s "
              f"reg_params={row['reg_param_count']}")
    return 0


def _cmd_prune(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    pruned, report = prune_network(ckpt.params, args.threshold)
    line = (f"prune: threshold={args.threshold} removed={report.total_pruned} "
            f"kept={'/'.join(str(k.size) for k in report.kept)}")
    if ckpt.config:
        bundle = load_dataset(config_from_snapshot(ckpt.config))
        probe = bundle.test.x[:256]
        diff = compare_outputs(ckpt.params, pruned, probe)
        line += f" max_output_diff={diff:.3e}"
    print(line)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        save_checkpoint(os.path.join(args.out, "pruned.npz"), pruned,
                        config=ckpt.config, metrics=ckpt.metrics)
        print(f"wrote {os.path.join(args.out, 'pruned.npz')}")
    return 0


def _cmd_continue(args) -> int:
    report = continue_training(args.checkpoint, epochs=args.epochs or 0,
                               target_metric=args.target_metric,
                               rand_init=args.rand_init, seed=args.seed)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        emit_report([report], "json", args.out)
        save_checkpoint(os.path.join(args.out, "checkpoint.npz"), report.params,
                        config=report.config, metrics=report.metrics)
    target = (f" steps_to_target={report.steps_to_target}"
              if args.target_metric is not None else "")
    print(f"continue: train_metric={report.train_metric:.6g} "
          f"test_metric={report.test_metric:.6g}{target}")
    return 0


def _cmd_gradcheck(args) -> int:
    records = gradcheck_battery(n_configs=args.configs, h=args.h, seed=args.seed or 2024)
    worst = 0.0
    for r in records:
        print(f"{r['kind']:<22} bn={str(r['batch_norm']):<5} {r['loss']:<22} "
              f"max_rel_error={r['max_rel_error']:.3e}")
        worst = max(worst, r["max_rel_error"])
    print(f"worst over {len(records)} configs: {worst:.3e} (tolerance {args.tol:.1e})")
    if worst > args.tol:
        raise NumericalError(f"gradient check failed: {worst:.3e} > {args.tol:.1e}")
    return 0


class _DictReport:
    """Adapter so emit_report can re-render reports loaded from json."""

    def __init__(self, d: dict):
        self._d = d

    def __getattr__(self, name):
        try:
            return self._d[name]
        except KeyError:
            raise AttributeError(name) from None

    def to_dict(self):
        return self._d


def _cmd_report(args) -> int:
    reports = []
    for path in args.inputs:
        with open(path, "r", encoding="utf-8") as f:
            loaded = json.load(f)
        if isinstance(loaded, dict):
            loaded = [loaded]
        reports.extend(_DictReport(d) for d in loaded)
    if not reports:
        raise DataError("no reports found in inputs")
    for path in emit_report(reports, args.format, args.out):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="slimnet",
                description="structured-sparsity MLP training and pruning")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="one seeded training run")
    _add_config_flags(t)
    t.add_argument("--out", default="runs/train", help="output directory")
    t.set_defaults(fn=_cmd_train)

    s = sub.add_parser("sweep", help="zero-ratio sweep")
    _add_config_flags(s)
    s.add_argument("--ratios", default="0,1/8,1/4,1/2,3/4",
                   help="comma-separated exact rationals")
    s.add_argument("--sweep-repeats", type=int, default=1,
                   help="independent seeded repeats per ratio")
    s.add_argument("--out", default="runs/sweep")
    s.set_defaults(fn=_cmd_sweep)

    pr = sub.add_parser("prune", help="prune a checkpointed network")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--threshold", type=float, default=1e-3)
    pr.add_argument("--out")
    pr.set_defaults(fn=_cmd_prune)

    c = sub.add_parser("continue", help="resume training from a checkpoint")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--epochs", type=int, default=0)
    c.add_argument("--target-metric", dest="target_metric", type=float)
    c.add_argument("--rand-init", dest="rand_init", action="store_true",
                   help="re-initialize the network (same shape) before training")
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.set_defaults(fn=_cmd_continue)

    g = sub.add_parser("gradcheck", help="finite-difference gradient battery")
    g.add_argument("--configs", type=int, default=20)
    g.add_argument("--h", type=float, default=1e-5)
    g.add_argument("--tol", type=float, default=1e-5)
    g.add_argument("--seed", type=int)
    g.set_defaults(fn=_cmd_gradcheck)

    r = sub.add_parser("report", help="re-render json reports")
    r.add_argument("--inputs", nargs="+", required=True)
    r.add_argument("--format", default="table-text",
                   choices=("table-text", "csv", "json", "plot-data"))
    r.add_argument("--out", default="runs/report")
    r.set_defaults(fn=_cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
