"""Seeded training runs, zero-ratio sweeps, continued training, reports.

Every run is fully determined by its config: the run seed derives the
init, mask, and per-epoch batch seeds through fixed namespaces, so replays
produce bit-identical metric curves. Wall time is measured around the
training loop only, and a repeat count re-runs the identical loop to
average timing (metrics do not change across repeats).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field, replace
from dataclasses import fields as dataclass_fields
from fractions import Fraction

import numpy as np

from .adam import AdamState, adam_step
from .checkpoint import Checkpoint, load_checkpoint
from .data import (Dataset, SplitSpec, batches, gen_toy, load_idx, load_table,
                   split, standardize_features, standardize_targets,
                   denormalize_targets)
from .errors import ConfigError, DivergenceError
from .gradients import accuracy, gradients, loss as loss_fn, normalize_loss_kind
from .model import NetworkParams, forward, init_network, mlp_specs, recalibrate_bn
from .pruning import active_neurons, sparsity
from .regularizers import (NeuronMask, RegularizerSpec, build_masks,
                           normalize_kind, parse_ratio, regularized_param_count)
from .tensor import derive_seed

# seed-derivation namespaces
_INIT = 1
_MASK = 2
_BATCH = 3
_SWEEP = 4
_REINIT = 5
_CONTINUE = 6

_FULL_TO_PARTIAL = {"group_lasso": "partial_gl", "sparse_group_lasso": "partial_sgl"}

PRESETS = ("toy", "boston", "sdd", "mnist", "fashion")


@dataclass
class ExperimentConfig:
    dataset: str = "toy"
    data_dir: str = "data"
    data_paths: dict = field(default_factory=dict)
    dims: list[int] | None = None
    batch_norm: bool = True
    loss: str = "mean_squared_error"
    reg_kind: str = "none"
    lam: float = 0.0
    alpha: float = 0.1
    layer_weights: list[float] | None = None
    zero_ratio: str = "0"
    placement: str = "prefix"
    smoothing_eps: float = 1e-8
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 10
    batch_size: int | None = None
    shuffle: bool = True
    split_fraction: float = 0.8
    split_seed: int = 0
    stratified: bool = False
    sparsity_threshold: float = 1e-3
    prune_threshold: float = 1e-3
    seed: int = 0
    repeats: int = 1
    init_std: float | None = None
    name: str = ""

    def __post_init__(self):
        self.loss = normalize_loss_kind(self.loss)
        self.reg_kind = normalize_kind(self.reg_kind)
        self.zero_ratio = str(parse_ratio(self.zero_ratio))
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")

    def snapshot(self) -> dict:
        return asdict(self)

    def reg_spec(self) -> RegularizerSpec:
        lw = tuple(self.layer_weights) if self.layer_weights else None
        return RegularizerSpec(kind=self.reg_kind, lam=self.lam, alpha=self.alpha,
                               layer_weights=lw, smoothing_eps=self.smoothing_eps)


def config_from_snapshot(snap: dict, **overrides) -> ExperimentConfig:
    """Rebuild a config from a report/checkpoint snapshot, dropping the
    bookkeeping keys continued runs add to theirs."""
    known = {f.name for f in dataclass_fields(ExperimentConfig)}
    base = {k: v for k, v in snap.items() if k in known}
    return ExperimentConfig(**{**base, **overrides})


def preset(name: str, **overrides) -> ExperimentConfig:
    """Named experiment defaults; keyword overrides win."""
    base = {
        "toy": dict(dataset="toy", dims=[1, 50, 50, 1], loss="mean_squared_error",
                    lam=1e-3, batch_size=None, epochs=10000),
        "boston": dict(dataset="boston", dims=[13, 40, 30, 1], loss="mean_squared_error",
                       lam=1e-3, batch_size=None, epochs=3000),
        "sdd": dict(dataset="sdd", dims=[48, 40, 40, 30, 11], loss="softmax_cross_entropy",
                    lam=1e-4, batch_size=500, epochs=20, stratified=True),
        "mnist": dict(dataset="mnist", dims=[784, 400, 300, 100, 10],
                      loss="softmax_cross_entropy", lam=1e-4, batch_size=400, epochs=10),
        "fashion": dict(dataset="fashion", dims=[784, 400, 300, 100, 10],
                        loss="softmax_cross_entropy", lam=1e-4, batch_size=400, epochs=10),
    }
    if name not in base:
        raise ConfigError(f"unknown preset {name!r}; have {', '.join(PRESETS)}")
    kw = dict(base[name], name=name)
    kw.update(overrides)
    return ExperimentConfig(**kw)


@dataclass
class DataBundle:
    train: Dataset
    test: Dataset
    raw: Dataset | None = None  # unnormalized full set, for fit plots


def _idx_paths(cfg: ExperimentConfig, sub: str, defaults: dict) -> dict:
    paths = {}
    for role, fname in defaults.items():
        paths[role] = cfg.data_paths.get(role, os.path.join(cfg.data_dir, sub, fname))
    return paths


def load_dataset(cfg: ExperimentConfig) -> DataBundle:
    """Resolve a config to normalized train/test datasets."""
    if cfg.dataset == "toy":
        raw = gen_toy(40)
        tr, te = split(raw, SplitSpec(cfg.split_fraction, cfg.split_seed))
        tr, te = standardize_features(tr, te)
        tr, te = standardize_targets(tr, te)
        return DataBundle(tr, te, raw)
    if cfg.dataset in ("boston", "sdd"):
        path = cfg.data_paths.get("table",
                                  os.path.join(cfg.data_dir, f"{cfg.dataset}.csv"))
        task = "regression" if cfg.dataset == "boston" else "classification"
        raw = load_table(path, target_column=-1, task=task, name=cfg.dataset)
        tr, te = split(raw, SplitSpec(cfg.split_fraction, cfg.split_seed,
                                      stratified=cfg.stratified))
        tr, te = standardize_features(tr, te)
        if task == "regression":
            tr, te = standardize_targets(tr, te)
        return DataBundle(tr, te, raw)
    if cfg.dataset in ("mnist", "fashion"):
        names = {
            "train_images": "train-images-10k-idx3-ubyte.gz",
            "train_labels": "train-labels-10k-idx1-ubyte.gz",
            "test_images": "test-images-2k-idx3-ubyte.gz",
            "test_labels": "test-labels-2k-idx1-ubyte.gz",
        }
        p = _idx_paths(cfg, cfg.dataset, names)
        tr = load_idx(p["train_images"], p["train_labels"])
        te = load_idx(p["test_images"], p["test_labels"])
        return DataBundle(tr, te)
    raise ConfigError(f"unknown dataset {cfg.dataset!r}")


@dataclass
class RunReport:
    config: dict
    train_metric: float
    test_metric: float
    metrics: dict
    neurons: list[int]
    sparsity_per_layer: list[float]
    sparsity_overall: float
    reg_param_count: int
    wall_time: float
    wall_times: list[float]
    curves: dict
    fit_points: list | None = None
    steps_to_target: int | None = None
    params: NetworkParams | None = None  # not serialized

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "params"}
        return d


def _evaluate(params: NetworkParams, ds: Dataset, loss_kind: str,
              chunk: int = 4096) -> dict:
    """Eval-mode loss (and accuracy for classification) over a dataset."""
    preds = []
    for i in range(0, ds.n, chunk):
        out, _ = forward(params, ds.x[i:i + chunk], mode="eval")
        preds.append(out)
    pred = np.concatenate(preds, axis=0)
    out = {"loss": loss_fn(pred, ds.y, loss_kind)}
    if ds.task == "classification":
        out["accuracy"] = accuracy(pred, ds.y)
    return out


def _metric(ev: dict, task: str) -> float:
    return ev["accuracy"] if task == "classification" else ev["loss"]


def _build_run_state(cfg: ExperimentConfig, in_dim: int):
    if not cfg.dims:
        raise ConfigError("config has no layer dims")
    if cfg.dims[0] != in_dim:
        raise ConfigError(f"dims[0]={cfg.dims[0]} but dataset has {in_dim} features")
    specs = mlp_specs(cfg.dims, batch_norm=cfg.batch_norm)
    params = init_network(specs, derive_seed(cfg.seed, _INIT), init_std=cfg.init_std)
    reg = cfg.reg_spec()
    masks = None
    if reg.is_partial:
        masks = build_masks(params, cfg.zero_ratio, cfg.placement,
                            derive_seed(cfg.seed, _MASK))
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    return params, reg, masks, state


def _train_loop(cfg: ExperimentConfig, params: NetworkParams, reg: RegularizerSpec,
                masks: NeuronMask | None, state: AdamState, bundle: DataBundle,
                seed: int, epochs: int, curves: dict | None = None,
                target_metric: float | None = None):
    """Adam training for ``epochs`` epochs; fills per-epoch curves in place.

    Returns the optimizer-step count at which the test metric first met
    target_metric (accuracy >=, loss <=), or None.
    """
    tr, te = bundle.train, bundle.test
    steps = 0
    hit = None
    for epoch in range(epochs):
        idx_batches = batches(tr.n, cfg.batch_size,
                              seed=derive_seed(seed, _BATCH, epoch),
                              shuffle=cfg.shuffle and cfg.batch_size is not None)
        obj_sum = 0.0
        for idx in idx_batches:
            obj, grads = gradients(params, (tr.x[idx], tr.y[idx]), cfg.loss,
                                   reg, masks, update_running=True)
            if not np.isfinite(obj):
                raise DivergenceError(f"non-finite objective at epoch {epoch}")
            adam_step(state, params, grads)
            steps += 1
            obj_sum += obj
        if curves is not None:
            ev = _evaluate(params, te, cfg.loss)
            curves["train_objective"].append(obj_sum / len(idx_batches))
            curves["test_metric"].append(_metric(ev, te.task))
            if target_metric is not None and hit is None:
                m = _metric(ev, te.task)
                ok = m >= target_metric if te.task == "classification" else m <= target_metric
                if ok:
                    hit = steps
    return hit


def _fit_points(params: NetworkParams, bundle: DataBundle) -> list | None:
    raw = bundle.raw
    if raw is None or raw.task != "regression" or raw.d != 1:
        return None
    mean, std = bundle.train.feature_stats
    xn = (raw.x - mean) / std
    pred, _ = forward(params, xn, mode="eval")
    y_pred = denormalize_targets(bundle.train, pred[:, 0])
    return [[float(a), float(b), float(c)]
            for a, b, c in zip(raw.x[:, 0], raw.y, y_pred)]


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """One deterministic training run: metrics, structure stats, timing."""
    bundle = load_dataset(cfg)
    wall_times = []
    params = reg = masks = None
    curves = None
    for _ in range(cfg.repeats):
        params, reg, masks, state = _build_run_state(cfg, bundle.train.d)
        curves = {"train_objective": [], "test_metric": []}
        t0 = time.perf_counter()
        _train_loop(cfg, params, reg, masks, state, bundle, cfg.seed,
                    cfg.epochs, curves)
        wall_times.append(time.perf_counter() - t0)

    recalibrate_bn(params, bundle.train.x)
    ev_train = _evaluate(params, bundle.train, cfg.loss)
    ev_test = _evaluate(params, bundle.test, cfg.loss)
    metrics = {
        "train_loss": ev_train["loss"],
        "test_loss": ev_test["loss"],
        "train_accuracy": ev_train.get("accuracy"),
        "test_accuracy": ev_test.get("accuracy"),
    }
    sp = sparsity(params, cfg.sparsity_threshold)
    report = RunReport(
        config=cfg.snapshot(),
        train_metric=_metric(ev_train, bundle.train.task),
        test_metric=_metric(ev_test, bundle.test.task),
        metrics=metrics,
        neurons=active_neurons(params, cfg.prune_threshold),
        sparsity_per_layer=sp.ratios,
        sparsity_overall=sp.overall,
        reg_param_count=regularized_param_count(params, reg, masks),
        wall_time=float(np.mean(wall_times)),
        wall_times=wall_times,
        curves=curves,
        fit_points=_fit_points(params, bundle),
        params=params,
    )
    return report


@dataclass
class SweepResult:
    reports: list
    summary: list


def sweep_beta(cfg: ExperimentConfig, ratios, repeats: int = 1) -> SweepResult:
    """One run per (zero ratio, repeat) with derived seeds, plus per-ratio
    median/mean summary rows. Full kinds are promoted to their partial
    counterparts; a ratio of 0 is then exactly the full regularizer."""
    kind = _FULL_TO_PARTIAL.get(cfg.reg_kind, cfg.reg_kind)
    spec_probe = RegularizerSpec(kind=kind)  # validates the kind
    if not spec_probe.is_partial:
        raise ConfigError(f"sweep needs a partial regularizer kind, got {cfg.reg_kind!r}")
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    parsed = [parse_ratio(r) for r in ratios]

    reports = []
    summary = []
    for ri, ratio in enumerate(parsed):
        arm_reports = []
        for rep in range(repeats):
            arm = replace(cfg, reg_kind=kind, zero_ratio=str(ratio),
                          seed=derive_seed(cfg.seed, _SWEEP, ri, rep))
            arm_reports.append(run_experiment(arm))
        reports.extend(arm_reports)
        tests = [r.test_metric for r in arm_reports]
        trains = [r.train_metric for r in arm_reports]
        times = [r.wall_time for r in arm_reports]
        summary.append({
            "ratio": str(ratio),
            "repeats": repeats,
            "train_metric_median": float(np.median(trains)),
            "train_metric_mean": float(np.mean(trains)),
            "test_metric_median": float(np.median(tests)),
            "test_metric_mean": float(np.mean(tests)),
            "time_mean": float(np.mean(times)),
            "time_median": float(np.median(times)),
            "reg_param_count": arm_reports[0].reg_param_count,
        })
    return SweepResult(reports, summary)


def continue_training(ckpt, epochs: int = 0, target_metric: float | None = None,
                      rand_init: bool = False, seed: int | None = None,
                      **overrides) -> RunReport:
    """Resume training from a checkpoint with a fresh optimizer state.

    rand_init swaps in a randomly re-initialized network of the same shape
    (the from-scratch baseline for slim-network comparisons). Reports
    steps-to-target when target_metric is given.
    """
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    if ckpt.config is None:
        raise ConfigError("checkpoint carries no config; cannot rebuild the dataset")
    cfg = config_from_snapshot(ckpt.config, **overrides)
    run_seed = cfg.seed if seed is None else seed
    bundle = load_dataset(cfg)

    params = ckpt.params.copy()
    if rand_init:
        params = init_network(list(params.specs), derive_seed(run_seed, _REINIT),
                              init_std=cfg.init_std)
    # masks/penalty follow the checkpointed config, but over current shapes
    reg = cfg.reg_spec()
    masks = None
    if reg.is_partial:
        masks = build_masks(params, cfg.zero_ratio, cfg.placement,
                            derive_seed(cfg.seed, _MASK))
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)

    curves = {"train_objective": [], "test_metric": []}
    t0 = time.perf_counter()
    hit = _train_loop(cfg, params, reg, masks, state, bundle,
                      derive_seed(run_seed, _CONTINUE), epochs, curves, target_metric)
    wall = time.perf_counter() - t0

    recalibrate_bn(params, bundle.train.x)
    ev_train = _evaluate(params, bundle.train, cfg.loss)
    ev_test = _evaluate(params, bundle.test, cfg.loss)
    sp = sparsity(params, cfg.sparsity_threshold)
    snap = cfg.snapshot()
    snap["continued_epochs"] = epochs
    snap["rand_init"] = rand_init
    return RunReport(
        config=snap,
        train_metric=_metric(ev_train, bundle.train.task),
        test_metric=_metric(ev_test, bundle.test.task),
        metrics={
            "train_loss": ev_train["loss"],
            "test_loss": ev_test["loss"],
            "train_accuracy": ev_train.get("accuracy"),
            "test_accuracy": ev_test.get("accuracy"),
        },
        neurons=active_neurons(params, cfg.prune_threshold),
        sparsity_per_layer=sp.ratios,
        sparsity_overall=sp.overall,
        reg_param_count=regularized_param_count(params, reg, masks),
        wall_time=wall,
        wall_times=[wall],
        curves=curves,
        fit_points=_fit_points(params, bundle),
        steps_to_target=hit,
        params=params,
    )


# ---------------------------------------------------------------------------
# report emission

_COLUMNS = ("label", "train_metric", "test_metric", "neurons", "sparsity", "time")


def _label(report: RunReport) -> str:
    c = report.config
    bits = [c.get("name") or c.get("dataset", "run"), c.get("reg_kind", "")]
    if c.get("reg_kind") in ("partial_gl", "partial_sgl"):
        bits.append(f"ratio={c.get('zero_ratio')}")
    return " ".join(b for b in bits if b)


def _row(report: RunReport) -> dict:
    return {
        "label": _label(report),
        "train_metric": report.train_metric,
        "test_metric": report.test_metric,
        "neurons": "/".join(str(n) for n in report.neurons),
        "sparsity": report.sparsity_overall,
        "time": report.wall_time,
    }


def emit_report(reports: list, fmt: str, out_dir) -> list[str]:
    """Write reports in one of: table-text, csv, json, plot-data.

    Column order is fixed (training metric, test metric, neurons, sparsity,
    time). csv floats use repr so parsing them back is exact. plot-data
    writes (ratio, repeat, test_metric) rows, plus (x, y_true, y_pred)
    triples when a report carries fit points.
    """
    if not reports:
        raise ConfigError("no reports to emit")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    if fmt == "table-text":
        path = os.path.join(out_dir, "report_table.txt")
        rows = [_row(r) for r in reports]
        widths = {c: max(len(c), *(len(_fmt_cell(row[c])) for row in rows))
                  for c in _COLUMNS}
        with open(path, "w", encoding="utf-8") as f:
            f.write("  ".join(c.ljust(widths[c]) for c in _COLUMNS).rstrip() + "\n")
            for row in rows:
                f.write("  ".join(_fmt_cell(row[c]).ljust(widths[c])
                                  for c in _COLUMNS).rstrip() + "\n")
        written.append(path)
    elif fmt == "csv":
        path = os.path.join(out_dir, "report.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write(",".join(_COLUMNS) + "\n")
            for r in reports:
                row = _row(r)
                f.write(",".join(_csv_cell(row[c]) for c in _COLUMNS) + "\n")
        written.append(path)
    elif fmt == "json":
        path = os.path.join(out_dir, "report.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump([r.to_dict() for r in reports], f, indent=1)
        written.append(path)
    elif fmt == "plot-data":
        path = os.path.join(out_dir, "ratio_metric.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write("ratio,repeat,test_metric\n")
            counts: dict[str, int] = {}
            for r in reports:
                ratio = str(r.config.get("zero_ratio", "0"))
                rep = counts.get(ratio, 0)
                counts[ratio] = rep + 1
                f.write(f"{ratio},{rep},{_csv_cell(r.test_metric)}\n")
        written.append(path)
        fits = [r for r in reports if r.fit_points]
        for i, r in enumerate(fits):
            fpath = os.path.join(out_dir, f"fit_points_{i}.csv")
            with open(fpath, "w", encoding="utf-8") as f:
                f.write("x,y_true,y_pred\n")
                for x, yt, yp in r.fit_points:
                    f.write(f"{_csv_cell(x)},{_csv_cell(yt)},{_csv_cell(yp)}\n")
            written.append(fpath)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    return written


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def load_report_csv(path) -> list[dict]:
    """Parse a csv emitted by emit_report back into typed rows (floats via
    float(repr) so values round-trip exactly)."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        row = dict(zip(header, cells))
        for key in ("train_metric", "test_metric", "sparsity", "time", "x",
                    "y_true", "y_pred"):
            if key in row:
                row[key] = float(row[key])
        rows.append(row)
    return rows
