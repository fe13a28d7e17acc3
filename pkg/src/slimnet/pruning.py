"""Post-training pruning and the sparsity / active-neuron metrics.

A hidden neuron goes when either its outgoing-weight row norm falls under
the threshold (its contribution downstream is negligible) or its incoming
column norm does (its output is then a constant, which gets folded into the
next layer before removal: into the bias of a plain layer, or subtracted
from the running mean of a batch-norm layer, since the pruned input used to
contribute that constant to the pre-normalization sum). Removal re-exposes
smaller norms, so the scan cascades until nothing changes. Input features
and output units are never removed, keeping network signatures comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateNetworkError, ParameterError, ShapeError
from .model import BN_EPS, NetworkParams, forward
from .regularizers import group_norms


@dataclass
class SparsityReport:
    threshold: float
    ratios: list[float]

    @property
    def overall(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else 0.0


@dataclass
class PruneReport:
    group_threshold: float
    kept: list[np.ndarray] = field(default_factory=list)      # per hidden layer, original indices
    pruned_counts: list[int] = field(default_factory=list)
    absorbed: list[np.ndarray] = field(default_factory=list)  # per hidden layer, constant folded downstream

    @property
    def total_pruned(self) -> int:
        return int(sum(self.pruned_counts))


def sparsity(params: NetworkParams, threshold: float) -> SparsityReport:
    """Per weight matrix, the fraction of entries with |w| strictly below
    threshold. Biases and batch-norm parameters are not counted."""
    if threshold < 0:
        raise ParameterError(f"threshold must be >= 0, got {threshold}")
    ratios = [float(np.count_nonzero(np.abs(w) < threshold)) / w.size
              for w in params.weight_matrices()]
    return SparsityReport(threshold, ratios)


def active_neurons(params: NetworkParams, group_threshold: float) -> list[int]:
    """Per-layer live-unit counts: rows of each weight matrix with norm >=
    threshold (input and hidden layers), plus the output layer counted by
    the column norms of the last matrix."""
    if group_threshold < 0:
        raise ParameterError(f"group_threshold must be >= 0, got {group_threshold}")
    counts = [int(np.count_nonzero(group_norms(w) >= group_threshold))
              for w in params.weight_matrices()]
    last = params.weight_matrices()[-1]
    counts.append(int(np.count_nonzero(group_norms(last.T) >= group_threshold)))
    return counts


def _constant_output(params: NetworkParams, layer: int, n: int) -> float:
    """Eval-mode output of hidden-layer neuron n when its incoming weights
    are (treated as) zero."""
    spec = params.specs[layer]
    p = params.layers[layer]
    if spec.batch_norm:
        istd = 1.0 / np.sqrt(p.running_var[n] + BN_EPS)
        pre = p.gamma[n] * (0.0 - p.running_mean[n]) * istd + p.delta[n]
    else:
        pre = p.b[n]
    return float(max(pre, 0.0)) if spec.activation == "relu" else float(pre)


def _absorb_downstream(params: NetworkParams, layer: int, contribution: np.ndarray):
    """Fold a constant pre-activation contribution into layer ``layer``."""
    nxt = params.layers[layer]
    if params.specs[layer].batch_norm:
        nxt.running_mean -= contribution  # the constant used to be part of z
    else:
        nxt.b += contribution


def _remove_neurons(params: NetworkParams, layer: int, drop: np.ndarray):
    """Delete hidden-layer neurons: incoming columns, per-unit params,
    outgoing rows. ``layer`` is 0-based over params.layers for the incoming
    side; the outgoing matrix is layer+1."""
    keep = np.setdiff1d(np.arange(params.specs[layer].out_dim), drop)
    p = params.layers[layer]
    p.w = p.w[:, keep].copy()
    p.b = p.b[keep].copy()
    for name in ("gamma", "delta", "running_mean", "running_var"):
        a = getattr(p, name)
        if a is not None:
            setattr(p, name, a[keep].copy())
    nxt = params.layers[layer + 1]
    nxt.w = nxt.w[keep, :].copy()
    new_spec = params.specs[layer]
    params.specs[layer] = type(new_spec)(new_spec.in_dim, keep.size,
                                         new_spec.activation, new_spec.batch_norm)
    ns = params.specs[layer + 1]
    params.specs[layer + 1] = type(ns)(keep.size, ns.out_dim, ns.activation, ns.batch_norm)


def prune_network(params: NetworkParams,
                  group_threshold: float) -> tuple[NetworkParams, PruneReport]:
    """Remove dead hidden neurons, folding constant outputs downstream.

    Thresholding is a strict inequality, so threshold 0 removes nothing.
    Emptying a layer raises instead of producing a zero-width network.
    """
    if group_threshold < 0:
        raise ParameterError(f"group_threshold must be >= 0, got {group_threshold}")
    out = params.copy()
    n_hidden = out.n_layers - 1
    alive = [np.arange(out.specs[i].out_dim) for i in range(n_hidden)]
    absorbed = [np.zeros(out.specs[i + 1].out_dim) for i in range(n_hidden)]

    changed = True
    while changed:
        changed = False
        for i in range(n_hidden):
            w_in = out.layers[i].w
            w_out = out.layers[i + 1].w
            in_dead = group_norms(w_in.T) < group_threshold
            out_dead = group_norms(w_out) < group_threshold
            drop = np.flatnonzero(in_dead | out_dead)
            if drop.size == 0:
                continue
            if drop.size == w_out.shape[0]:
                raise DegenerateNetworkError(
                    f"pruning would remove every neuron feeding layer {i + 1}")
            contribution = np.zeros(out.specs[i + 1].out_dim)
            for n in np.flatnonzero(in_dead):
                c = _constant_output(out, i, int(n))
                if c != 0.0:
                    contribution += c * w_out[n, :]
            if contribution.any():
                _absorb_downstream(out, i + 1, contribution)
            # book-keep in original downstream coordinates
            if i + 1 < n_hidden:
                absorbed[i][alive[i + 1]] += contribution
            else:
                absorbed[i] += contribution
            _remove_neurons(out, i, drop)
            alive[i] = np.delete(alive[i], drop)
            changed = True

    report = PruneReport(
        group_threshold,
        kept=alive,
        pruned_counts=[params.specs[i].out_dim - alive[i].size for i in range(n_hidden)],
        absorbed=absorbed,
    )
    return out, report


def compare_outputs(a: NetworkParams, b: NetworkParams, probe: np.ndarray) -> float:
    """Max absolute eval-mode output difference over a probe batch."""
    if a.specs[0].in_dim != b.specs[0].in_dim or a.specs[-1].out_dim != b.specs[-1].out_dim:
        raise ShapeError("networks differ in input or output width")
    ya, _ = forward(a, probe, mode="eval")
    yb, _ = forward(b, probe, mode="eval")
    return float(np.max(np.abs(ya - yb))) if probe.shape[0] else 0.0
