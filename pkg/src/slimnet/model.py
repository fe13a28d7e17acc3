"""Fully connected network: construction, forward pass, neuron permutation.

Layout convention: layer l computes y = x @ W + b with W of shape
(in_dim, out_dim), so row n of W holds the outgoing weights of neuron n in
the previous layer. Batch normalization, when enabled, sits between the
linear map and the activation; its mean subtraction makes the additive bias
b redundant, so BN layers skip b entirely and the learned BN shift plays
that role (b stays in the parameter set at its initial zeros).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .errors import ConfigError, DegenerateBatchError, ShapeError
from .tensor import RngStream, matmul

BN_EPS = 1e-5
BN_MOMENTUM = 0.9

_ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"
    batch_norm: bool = False

    def __post_init__(self):
        if self.in_dim < 0 or self.out_dim < 1:
            raise ConfigError(f"layer dims must be positive, got {self.in_dim}/{self.out_dim}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


def mlp_specs(dims: list[int], batch_norm: bool = True) -> list[LayerSpec]:
    """Hidden layers ReLU (optionally batch-normalized), output layer identity."""
    if len(dims) < 2:
        raise ConfigError("need at least input and output dims")
    specs = []
    for i in range(len(dims) - 1):
        last = i == len(dims) - 2
        specs.append(
            LayerSpec(
                dims[i],
                dims[i + 1],
                activation="identity" if last else "relu",
                batch_norm=False if last else batch_norm,
            )
        )
    return specs


@dataclass
class LayerParams:
    w: np.ndarray
    b: np.ndarray
    gamma: np.ndarray | None = None
    delta: np.ndarray | None = None
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None

    def copy(self) -> "LayerParams":
        c = lambda a: None if a is None else a.copy()
        return LayerParams(self.w.copy(), self.b.copy(), c(self.gamma), c(self.delta),
                           c(self.running_mean), c(self.running_var))


@dataclass
class NetworkParams:
    specs: list[LayerSpec]
    layers: list[LayerParams]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> list[int]:
        return [self.specs[0].in_dim] + [s.out_dim for s in self.specs]

    def copy(self) -> "NetworkParams":
        return NetworkParams(list(self.specs), [p.copy() for p in self.layers])

    def trainable(self) -> Iterator[tuple[str, np.ndarray]]:
        """Canonical (key, array) iteration over trained parameter arrays."""
        for i, (spec, p) in enumerate(zip(self.specs, self.layers)):
            yield f"w{i}", p.w
            yield f"b{i}", p.b
            if spec.batch_norm:
                yield f"gamma{i}", p.gamma
                yield f"delta{i}", p.delta

    def weight_matrices(self) -> list[np.ndarray]:
        return [p.w for p in self.layers]


@dataclass
class LayerTrace:
    x_in: np.ndarray               # layer input
    z: np.ndarray                  # linear output (pre-BN)
    act_in: np.ndarray             # activation input (post-BN if BN else z)
    out: np.ndarray                # layer output
    bn_mu: np.ndarray | None = None
    bn_var: np.ndarray | None = None
    bn_istd: np.ndarray | None = None
    bn_xhat: np.ndarray | None = None


@dataclass
class ForwardTrace:
    layers: list[LayerTrace] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.layers[-1].out


def init_network(specs: list[LayerSpec], seed: int, init_std: float | None = None) -> NetworkParams:
    """Seeded network: weights ~ Normal(0, std^2), biases 0, BN at identity.

    ``init_std=None`` uses sqrt(2/fan_in) per layer; a positive float fixes
    one std for every layer. Each layer draws from its own forked stream.
    """
    if not specs:
        raise ConfigError("empty layer spec list")
    for a, b in zip(specs, specs[1:]):
        if a.out_dim != b.in_dim:
            raise ConfigError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
    if init_std is not None and not init_std > 0:
        raise ConfigError(f"init_std must be > 0, got {init_std}")

    rng = RngStream(seed)
    layers = []
    for i, spec in enumerate(specs):
        std = math.sqrt(2.0 / spec.in_dim) if init_std is None else init_std
        w = rng.fork(i).normal(spec.in_dim * spec.out_dim, 0.0, std)
        w = w.reshape(spec.in_dim, spec.out_dim)
        b = np.zeros(spec.out_dim)
        if spec.batch_norm:
            layers.append(LayerParams(w, b,
                                      gamma=np.ones(spec.out_dim),
                                      delta=np.zeros(spec.out_dim),
                                      running_mean=np.zeros(spec.out_dim),
                                      running_var=np.ones(spec.out_dim)))
        else:
            layers.append(LayerParams(w, b))
    return NetworkParams(list(specs), layers)


def forward(params: NetworkParams, x: np.ndarray, mode: str = "eval",
            update_running: bool = False) -> tuple[np.ndarray, ForwardTrace]:
    """Batched forward pass.

    mode "train" normalizes BN layers with batch statistics (batch >= 2
    required) and, when ``update_running`` is set, folds them into the
    running estimates in place; mode "eval" uses the stored running
    statistics and never mutates anything.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"unknown mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.specs[0].in_dim:
        raise ShapeError(f"input shape {x.shape} does not match in_dim {params.specs[0].in_dim}")
    if mode == "train" and x.shape[0] < 2 and any(s.batch_norm for s in params.specs):
        raise DegenerateBatchError("train-mode batch normalization needs batch size >= 2")
    if update_running and mode != "train":
        raise ConfigError("running statistics update only in train mode")

    trace = ForwardTrace()
    out = x
    for spec, p in zip(params.specs, params.layers):
        x_in = out
        if spec.batch_norm:
            z = matmul(x_in, p.w)           # bias is redundant under BN
            if mode == "train":
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                istd = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (z - mu) * istd
                if update_running:
                    p.running_mean *= BN_MOMENTUM
                    p.running_mean += (1.0 - BN_MOMENTUM) * mu
                    p.running_var *= BN_MOMENTUM
                    p.running_var += (1.0 - BN_MOMENTUM) * var
            else:
                mu = p.running_mean
                var = p.running_var
                istd = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (z - mu) * istd
            act_in = p.gamma * xhat + p.delta
            lt = LayerTrace(x_in, z, act_in, None, bn_mu=mu, bn_var=var,
                            bn_istd=istd, bn_xhat=xhat)
        else:
            z = matmul(x_in, p.w) + p.b
            act_in = z
            lt = LayerTrace(x_in, z, act_in, None)
        out = np.maximum(act_in, 0.0) if spec.activation == "relu" else act_in
        lt.out = out
        trace.layers.append(lt)
    return out, trace


def recalibrate_bn(params: NetworkParams, x: np.ndarray) -> NetworkParams:
    """Set batch-norm running statistics to the batch statistics of one
    train-mode pass over ``x`` (normally the whole training set).

    Running estimates trail the weights by construction, which skews
    eval-mode metrics after training ends; pinning them to the final
    weights' statistics makes evaluation consistent. In place; idempotent
    for fixed weights and x. No-op for networks without batch norm.
    """
    if not any(s.batch_norm for s in params.specs):
        return params
    _, trace = forward(params, x, mode="train")
    for spec, p, lt in zip(params.specs, params.layers, trace.layers):
        if spec.batch_norm:
            p.running_mean = lt.bn_mu.copy()
            p.running_var = lt.bn_var.copy()
    return params


def permute_hidden(params: NetworkParams, layer: int, perm) -> NetworkParams:
    """Relabel the neurons of hidden layer ``layer`` (1-based, 1..L-1).

    Entry j of the permuted layer is old neuron perm[j]: columns of the
    incoming weight matrix, the per-unit parameters, and the rows of the
    outgoing weight matrix move together, so the network function is
    unchanged.
    """
    L = params.n_layers
    if not 1 <= layer <= L - 1:
        raise ConfigError(f"layer {layer} is not a hidden layer of an {L}-layer network")
    perm = np.asarray(perm, dtype=np.intp)
    n = params.specs[layer - 1].out_dim
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ConfigError(f"perm is not a permutation of 0..{n - 1}")

    out = params.copy()
    p = out.layers[layer - 1]
    p.w = p.w[:, perm].copy()
    p.b = p.b[perm].copy()
    for name in ("gamma", "delta", "running_mean", "running_var"):
        a = getattr(p, name)
        if a is not None:
            setattr(p, name, a[perm].copy())
    nxt = out.layers[layer]
    nxt.w = nxt.w[perm, :].copy()
    return out


def zero_like_grads(params: NetworkParams) -> dict[str, np.ndarray]:
    """Zero-filled gradient arrays keyed like NetworkParams.trainable()."""
    return {k: np.zeros_like(a) for k, a in params.trainable()}
