"""Losses, analytic gradients of the training objective, finite-diff oracle.

The objective is data loss plus lam times the penalty value, and the
returned gradient is its exact derivative: the backward pass differentiates
the train-mode forward (batch statistics included, full chain rule through
mean and variance) and the penalty part comes from the smoothed subgradient,
so a central-difference probe of the same objective agrees to oracle
precision everywhere the ReLU pattern is locally constant.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DataError, NumericalError, ShapeError
from .model import ForwardTrace, NetworkParams, forward, init_network, mlp_specs, zero_like_grads
from .regularizers import (KINDS, NeuronMask, RegularizerSpec, build_masks,
                           reg_value, reg_subgrad)
from .tensor import RngStream, derive_seed

LOSS_KINDS = ("mean_squared_error", "softmax_cross_entropy")

_LOSS_ALIASES = {
    "mse": "mean_squared_error",
    "cross_entropy": "softmax_cross_entropy",
    "ce": "softmax_cross_entropy",
}


def normalize_loss_kind(kind: str) -> str:
    kind = _LOSS_ALIASES.get(kind, kind)
    if kind not in LOSS_KINDS:
        raise ConfigError(f"unknown loss kind {kind!r}")
    return kind


def _as_targets(pred: np.ndarray, target, kind: str) -> np.ndarray:
    if kind == "mean_squared_error":
        t = np.asarray(target, dtype=np.float64)
        if t.ndim == 1:
            t = t.reshape(-1, 1)
        if t.shape != pred.shape:
            raise ShapeError(f"target shape {t.shape} does not match predictions {pred.shape}")
        return t
    t = np.asarray(target)
    if t.ndim != 1 or t.shape[0] != pred.shape[0]:
        raise ShapeError(f"labels must be one per row, got shape {t.shape}")
    if not np.issubdtype(t.dtype, np.integer):
        ti = t.astype(np.int64)
        if not np.array_equal(ti, t):
            raise DataError("class labels must be integers")
        t = ti
    if t.size and (t.min() < 0 or t.max() >= pred.shape[1]):
        raise DataError(f"label outside 0..{pred.shape[1] - 1}")
    return t


def _log_softmax(pred: np.ndarray) -> np.ndarray:
    m = pred.max(axis=1, keepdims=True)
    shifted = pred - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse


def loss(pred: np.ndarray, target, kind: str) -> float:
    """Mean loss over the batch.

    MSE averages squared error over batch and output entries; cross-entropy
    averages -log softmax(pred)[label] with max subtraction for stability.
    """
    kind = normalize_loss_kind(kind)
    pred = np.asarray(pred, dtype=np.float64)
    t = _as_targets(pred, target, kind)
    if kind == "mean_squared_error":
        d = pred - t
        return float(np.mean(d * d))
    logp = _log_softmax(pred)
    return float(-logp[np.arange(pred.shape[0]), t].mean())


def loss_grad(pred: np.ndarray, target, kind: str) -> np.ndarray:
    kind = normalize_loss_kind(kind)
    pred = np.asarray(pred, dtype=np.float64)
    t = _as_targets(pred, target, kind)
    if kind == "mean_squared_error":
        return 2.0 * (pred - t) / pred.size
    p = np.exp(_log_softmax(pred))
    p[np.arange(pred.shape[0]), t] -= 1.0
    return p / pred.shape[0]


def accuracy(pred: np.ndarray, labels) -> float:
    """Fraction of rows whose argmax matches the label."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    return float(np.mean(pred.argmax(axis=1) == labels))


def _check_finite(arr: np.ndarray, layer: int, what: str):
    if not np.isfinite(arr).all():
        raise NumericalError(f"non-finite {what} in layer {layer}")


def backward(params: NetworkParams, trace: ForwardTrace,
             dout: np.ndarray) -> dict[str, np.ndarray]:
    """Data-loss gradient from a train-mode trace and d(loss)/d(output)."""
    grads = zero_like_grads(params)
    d = dout
    for i in range(params.n_layers - 1, -1, -1):
        spec = params.specs[i]
        lt = trace.layers[i]
        if spec.activation == "relu":
            d = d * (lt.act_in > 0)
        if spec.batch_norm:
            grads[f"gamma{i}"] = (d * lt.bn_xhat).sum(axis=0)
            grads[f"delta{i}"] = d.sum(axis=0)
            dxhat = d * params.layers[i].gamma
            b = d.shape[0]
            # full chain rule through batch mean and (biased) variance
            dz = (lt.bn_istd / b) * (b * dxhat - dxhat.sum(axis=0)
                                     - lt.bn_xhat * (dxhat * lt.bn_xhat).sum(axis=0))
        else:
            dz = d
            grads[f"b{i}"] = dz.sum(axis=0)
        grads[f"w{i}"] = lt.x_in.T @ dz
        _check_finite(grads[f"w{i}"], i, "weight gradient")
        if i > 0:
            d = dz @ params.layers[i].w.T
    return grads


def gradients(params: NetworkParams, batch, lossk: str,
              reg: RegularizerSpec | None = None,
              masks: NeuronMask | None = None,
              update_running: bool = False) -> tuple[float, dict[str, np.ndarray]]:
    """Objective value and its exact gradient on one batch.

    The objective is loss + lam * penalty; the returned dict is keyed like
    NetworkParams.trainable(). update_running folds the batch statistics of
    batch-norm layers into the running estimates as a side effect (training
    use); leave it off for pure evaluation.
    """
    x, target = batch
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise ConfigError("empty batch")
    reg = reg or RegularizerSpec()
    pred, trace = forward(params, x, mode="train", update_running=update_running)
    for i, lt in enumerate(trace.layers):
        _check_finite(lt.out, i, "activation")
    data_loss = loss(pred, target, lossk)
    objective = data_loss + reg.lam * reg_value(params, reg, masks)
    grads = backward(params, trace, loss_grad(pred, target, lossk))
    if reg.kind != "none" and reg.lam != 0.0:
        rg = reg_subgrad(params, reg, masks)
        for i in range(params.n_layers):
            grads[f"w{i}"] += reg.lam * rg[f"w{i}"]
    return objective, grads


def finite_diff_check(params: NetworkParams, batch, lossk: str,
                      reg: RegularizerSpec | None = None,
                      masks: NeuronMask | None = None,
                      h: float = 1e-5) -> float:
    """Max relative error of the analytic gradient vs central differences.

    Every trainable scalar is perturbed by +-h; the probe recomputes the
    full objective, so the smoothed penalty is active on both sides. The
    relative error divides by max(1e-8, |numeric|).
    """
    if not h > 0:
        raise ConfigError(f"h must be > 0, got {h}")
    x, target = batch
    reg = reg or RegularizerSpec()
    _, analytic = gradients(params, batch, lossk, reg, masks)

    work = params.copy()
    arrays = dict(work.trainable())

    def objective() -> float:
        pred, _ = forward(work, x, mode="train")
        return loss(pred, target, lossk) + reg.lam * reg_value(work, reg, masks)

    worst = 0.0
    for key, arr in arrays.items():
        an = analytic[key]
        flat = arr.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            f_plus = objective()
            flat[j] = orig - h
            f_minus = objective()
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(an.reshape(-1)[j] - numeric) / max(1e-8, abs(numeric))
            worst = max(worst, err)
    return worst


def _battery_instance(seed: int, bn: bool, kind: str,
                      placement: str, dims, batch: int):
    """Seeded (params, batch, masks) with the ReLU pattern well clear of
    kinks and |w| clear of the L1 crease, found by deterministic redraws."""
    specs = mlp_specs(dims, batch_norm=bn)
    for attempt in range(200):
        rng = RngStream(derive_seed(seed, attempt))
        params = init_network(specs, derive_seed(seed, attempt, 1), init_std=0.7)
        k = 0
        for key, arr in params.trainable():
            if not key.startswith("w"):
                arr += 0.3 * rng.fork(2, k).normal(arr.size).reshape(arr.shape)
            k += 1
        x = rng.fork(3).normal(batch * dims[0]).reshape(batch, dims[0])
        _, trace = forward(params, x, mode="train")
        kink = min((np.abs(lt.act_in).min() for lt, s in
                    zip(trace.layers, specs) if s.activation == "relu"),
                   default=1.0)
        min_w = min(np.abs(p.w).min() for p in params.layers)
        if kink > 3e-3 and min_w > 1e-4:
            masks = None
            if kind in ("partial_gl", "partial_sgl"):
                masks = build_masks(params, "1/4", placement,
                                    derive_seed(seed, attempt, 4))
            return params, x, masks
    raise NumericalError("could not find a kink-separated gradcheck instance")


def gradcheck_battery(n_configs: int = 20, h: float = 1e-5,
                      smoothing_eps: float = 1e-8, seed: int = 2024,
                      lam: float = 0.05) -> list[dict]:
    """Seeded gradient checks spanning every penalty kind, with and without
    batch normalization. Returns one record per configuration."""
    base = ([(kind, bn) for bn in (False, True) for kind in KINDS]
            + [("sparse_group_lasso", True), ("partial_sgl", False)])
    combos = [base[i % len(base)] for i in range(max(n_configs, 1))]

    records = []
    for i, (kind, bn) in enumerate(combos):
        alpha = 0.5 if i >= 18 else 0.1
        placement = "seeded_random" if i == 19 else "prefix"
        lossk = "mean_squared_error" if i % 2 == 0 else "softmax_cross_entropy"
        dims = [3, 5, 4, 2]
        params, x, masks = _battery_instance(derive_seed(seed, i), bn, kind,
                                             placement, dims, batch=6)
        rng = RngStream(derive_seed(seed, i, 99))
        if lossk == "mean_squared_error":
            target = rng.normal(x.shape[0] * dims[-1]).reshape(x.shape[0], dims[-1])
        else:
            target = rng.integers(0, dims[-1], size=x.shape[0])
        reg = RegularizerSpec(kind=kind, lam=lam, alpha=alpha,
                              smoothing_eps=smoothing_eps)
        err = finite_diff_check(params, (x, target), lossk, reg, masks, h=h)
        records.append({"kind": kind, "batch_norm": bn, "loss": lossk,
                        "max_rel_error": err})
    return records
