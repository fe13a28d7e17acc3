"""Versioned npz checkpoints: network, optional optimizer state, metadata.

Arrays round-trip bit-identically (npy float64 payloads), so resuming from
a checkpoint continues exactly where training stopped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .adam import AdamState
from .errors import FormatError
from .model import LayerParams, LayerSpec, NetworkParams

FORMAT_VERSION = 1

_OPT_FIELDS = ("gamma", "delta", "running_mean", "running_var")


@dataclass
class Checkpoint:
    params: NetworkParams
    adam: AdamState | None = None
    config: dict | None = None
    metrics: dict | None = None


def save_checkpoint(path, params: NetworkParams, adam: AdamState | None = None,
                    config: dict | None = None, metrics: dict | None = None):
    arrays: dict[str, np.ndarray] = {
        "version": np.array([FORMAT_VERSION]),
        "spec_in": np.array([s.in_dim for s in params.specs]),
        "spec_out": np.array([s.out_dim for s in params.specs]),
        "spec_act": np.array([s.activation for s in params.specs]),
        "spec_bn": np.array([s.batch_norm for s in params.specs]),
    }
    for i, p in enumerate(params.layers):
        arrays[f"L{i}_w"] = p.w
        arrays[f"L{i}_b"] = p.b
        for name in _OPT_FIELDS:
            a = getattr(p, name)
            if a is not None:
                arrays[f"L{i}_{name}"] = a
    if adam is not None:
        arrays["adam_hyper"] = np.array([adam.lr, adam.beta1, adam.beta2, adam.eps])
        arrays["adam_t"] = np.array([adam.t])
        for key in adam.m:
            arrays[f"adam_m_{key}"] = adam.m[key]
            arrays[f"adam_v_{key}"] = adam.v[key]
    if config is not None:
        arrays["config_json"] = np.array(json.dumps(config))
    if metrics is not None:
        arrays["metrics_json"] = np.array(json.dumps(metrics))
    np.savez_compressed(path, **arrays)
    return path


def load_checkpoint(path) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as z:
            data = {k: z[k] for k in z.files}
    except (OSError, ValueError) as e:
        raise FormatError(f"unreadable checkpoint {path}: {e}") from None
    if "version" not in data or int(data["version"][0]) != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version in {path}")

    specs = [LayerSpec(int(i), int(o), str(a), bool(b))
             for i, o, a, b in zip(data["spec_in"], data["spec_out"],
                                   data["spec_act"], data["spec_bn"])]
    layers = []
    for i in range(len(specs)):
        kw = {name: data.get(f"L{i}_{name}") for name in _OPT_FIELDS}
        layers.append(LayerParams(data[f"L{i}_w"], data[f"L{i}_b"], **kw))
    params = NetworkParams(specs, layers)

    adam = None
    if "adam_hyper" in data:
        lr, b1, b2, eps = data["adam_hyper"]
        adam = AdamState(lr=float(lr), beta1=float(b1), beta2=float(b2), eps=float(eps),
                         t=int(data["adam_t"][0]))
        for key, _ in params.trainable():
            if f"adam_m_{key}" in data:
                adam.m[key] = data[f"adam_m_{key}"]
                adam.v[key] = data[f"adam_v_{key}"]

    config = json.loads(str(data["config_json"])) if "config_json" in data else None
    metrics = json.loads(str(data["metrics_json"])) if "metrics_json" in data else None
    return Checkpoint(params, adam, config, metrics)
