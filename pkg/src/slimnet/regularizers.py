"""Group-lasso-family penalties over the network's weight matrices.

A group is one row of a weight matrix: the outgoing weights of one neuron
in the layer below. Group norms are smoothed, sqrt(||row||^2 + eps^2), so
the penalty stays differentiable through zero and the analytic gradient is
the exact derivative of the reported value. Biases and batch-norm
parameters are never penalized.

Partial kinds restrict the penalty to mask-selected rows and compute on the
sliced submatrix, which is where their speedup comes from; a mask with no
zeros takes the unsliced path, so a zero-ratio-0 partial run is
bit-identical to the corresponding full run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError
from .model import NetworkParams, zero_like_grads
from .tensor import RngStream, row_slice

log = logging.getLogger(__name__)

KINDS = ("none", "l1", "l2", "group_lasso", "sparse_group_lasso",
         "weighted_gl", "weighted_sgl", "partial_gl", "partial_sgl")

SPARSE_KINDS = ("sparse_group_lasso", "weighted_sgl", "partial_sgl")
WEIGHTED_KINDS = ("weighted_gl", "weighted_sgl")
PARTIAL_KINDS = ("partial_gl", "partial_sgl")
GROUP_KINDS = ("group_lasso", "sparse_group_lasso", "weighted_gl",
               "weighted_sgl", "partial_gl", "partial_sgl")

KIND_ALIASES = {
    "gl": "group_lasso",
    "sgl": "sparse_group_lasso",
    "wgl": "weighted_gl",
    "wsgl": "weighted_sgl",
    "pgl": "partial_gl",
    "psgl": "partial_sgl",
}


def normalize_kind(kind: str) -> str:
    """Canonical kind name from a short CLI alias or the name itself."""
    kind = KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ConfigError(f"unknown regularizer kind {kind!r}")
    return kind


def parse_ratio(value) -> Fraction:
    """Zero ratio as an exact rational ("1/8", 0.25, Fraction), clamped check only."""
    if isinstance(value, Fraction):
        r = value
    elif isinstance(value, str):
        try:
            r = Fraction(value)
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"bad zero_ratio {value!r}: {e}") from None
    elif isinstance(value, int):
        r = Fraction(value)
    elif isinstance(value, float):
        r = Fraction(value).limit_denominator(10**9)
    else:
        raise ConfigError(f"bad zero_ratio type {type(value).__name__}")
    if not 0 <= r <= 1:
        raise ConfigError(f"zero_ratio must lie in [0,1], got {r}")
    return r


@dataclass(frozen=True)
class RegularizerSpec:
    """Penalty selection and its hyperparameters.

    lam is the global strength applied by the training objective, not by
    reg_value itself. alpha mixes group and elementwise terms for sparse
    kinds. layer_weights are the per-layer multipliers of the weighted
    kinds (default: 1 for the first half of the layers, 10 for the rest).
    group_weight overrides the per-layer sqrt(width) group scaling.
    """
    kind: str = "none"
    lam: float = 0.0
    alpha: float = 0.1
    layer_weights: tuple[float, ...] | None = None
    group_weight: tuple[float, ...] | None = None
    smoothing_eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown regularizer kind {self.kind!r}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0,1], got {self.alpha}")
        if not self.smoothing_eps > 0:
            raise ConfigError(f"smoothing_eps must be > 0, got {self.smoothing_eps}")

    @property
    def is_partial(self) -> bool:
        return self.kind in PARTIAL_KINDS

    @property
    def is_sparse(self) -> bool:
        return self.kind in SPARSE_KINDS

    @property
    def is_weighted(self) -> bool:
        return self.kind in WEIGHTED_KINDS


@dataclass
class MaskLayer:
    """Mask over one weight matrix: bit n gates the penalty on row n."""
    bits: np.ndarray
    zero_ratio: Fraction
    placement: str

    @property
    def keep(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    @property
    def n_zeros(self) -> int:
        return int(self.bits.size - np.count_nonzero(self.bits))


@dataclass
class NeuronMask:
    layers: list[MaskLayer] = field(default_factory=list)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)


def build_mask(n_groups: int, zero_ratio, placement: str = "prefix",
               seed: int = 0) -> MaskLayer:
    """One mask layer with exactly floor(zero_ratio * n_groups) zeros.

    prefix puts the zeros at the lowest row indices; seeded_random scatters
    them by a seeded draw. The count uses exact rational arithmetic so
    "1/3" of 3 groups is 1 zero, not a float-floor surprise.
    """
    if n_groups < 0:
        raise ConfigError(f"n_groups must be >= 0, got {n_groups}")
    if placement not in ("prefix", "seeded_random"):
        raise ConfigError(f"unknown mask placement {placement!r}")
    ratio = parse_ratio(zero_ratio)
    n_zeros = int(ratio * n_groups)  # Fraction * int floors exactly via int()
    bits = np.ones(n_groups, dtype=np.uint8)
    if placement == "prefix":
        bits[:n_zeros] = 0
    else:
        where = RngStream(seed).permutation(n_groups)[:n_zeros]
        bits[where] = 0
    if n_zeros == n_groups and n_groups > 0:
        log.warning("mask with zero_ratio %s leaves all %d groups unregularized",
                    ratio, n_groups)
    return MaskLayer(bits, ratio, placement)


def build_masks(params: NetworkParams, zero_ratio, placement: str = "prefix",
                seed: int = 0) -> NeuronMask:
    """Uniform-ratio masks, one per weight matrix, seeded per layer."""
    rng = RngStream(seed)
    layers = []
    for i, w in enumerate(params.weight_matrices()):
        layer_seed = seed if placement == "prefix" else _layer_seed(rng, i)
        layers.append(build_mask(w.shape[0], zero_ratio, placement, layer_seed))
    return NeuronMask(layers)


def _layer_seed(rng: RngStream, i: int) -> int:
    return int(rng.fork(i).integers(0, 2**63 - 1))


def group_norms(w: np.ndarray) -> np.ndarray:
    """Exact Euclidean norm of each row (no smoothing)."""
    w = np.asarray(w, dtype=np.float64)
    return np.sqrt(np.einsum("ij,ij->i", w, w))


def _group_weights(params: NetworkParams, spec: RegularizerSpec) -> list[float]:
    if spec.group_weight is not None:
        gw = list(spec.group_weight)
        if len(gw) != params.n_layers:
            raise ConfigError(f"group_weight needs {params.n_layers} entries, got {len(gw)}")
        return [float(g) for g in gw]
    return [float(np.sqrt(w.shape[1])) for w in params.weight_matrices()]


def _layer_weights(params: NetworkParams, spec: RegularizerSpec) -> list[float]:
    if not spec.is_weighted:
        return [1.0] * params.n_layers
    if spec.layer_weights is not None:
        lw = list(spec.layer_weights)
        if len(lw) != params.n_layers:
            raise ConfigError(f"layer_weights needs {params.n_layers} entries, got {len(lw)}")
        return [float(v) for v in lw]
    half = params.n_layers // 2
    return [1.0 if i < half else 10.0 for i in range(params.n_layers)]


def _check_masks(params: NetworkParams, spec: RegularizerSpec,
                 masks: NeuronMask | None) -> NeuronMask | None:
    if spec.is_partial:
        if masks is None:
            raise ConfigError(f"kind {spec.kind!r} requires masks")
        if len(masks) != params.n_layers:
            raise ConfigError(f"masks cover {len(masks)} layers, network has {params.n_layers}")
        for i, (m, w) in enumerate(zip(masks, params.weight_matrices())):
            if m.bits.shape != (w.shape[0],):
                raise ConfigError(f"mask {i} length {m.bits.shape} != rows {w.shape[0]}")
        return masks
    return None


def _suffix_start(mask: MaskLayer) -> int | None:
    """First kept row when the zeros sit exactly at the lowest indices."""
    nz = mask.n_zeros
    if not mask.bits[:nz].any():
        return nz
    return None


def _layer_slab(w: np.ndarray, mask: MaskLayer | None) -> np.ndarray:
    """Rows of w entering the penalty. No-zero masks skip the slice so the
    zero-ratio-0 partial path is the full path, float for float. Prefix
    masks slice a contiguous view, which is what makes masked evaluation
    cheaper than full evaluation instead of just smaller."""
    if mask is None or mask.n_zeros == 0:
        return w
    start = _suffix_start(mask)
    if start is not None:
        return w[start:]
    return row_slice(w, mask.keep)


def _smoothed_norms(slab: np.ndarray, eps: float) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", slab, slab) + eps * eps)


def reg_value(params: NetworkParams, spec: RegularizerSpec,
              masks: NeuronMask | None = None) -> float:
    """Penalty value, excluding the global lam factor.

    Group kinds sum sqrt(width)-weighted smoothed row norms per layer;
    sparse kinds mix that with the elementwise L1 sum as
    (1-alpha)*group + alpha*l1 so the alpha=0 reduction is exact.
    """
    masks = _check_masks(params, spec, masks)
    if spec.kind == "none":
        return 0.0
    ws = params.weight_matrices()
    if spec.kind == "l1":
        return float(sum(np.abs(w).sum() for w in ws))
    if spec.kind == "l2":
        return float(sum(np.einsum("ij,ij->", w, w) for w in ws))

    gw = _group_weights(params, spec)
    lw = _layer_weights(params, spec)
    group_total = 0.0
    l1_total = 0.0
    for i, w in enumerate(ws):
        mask = masks.layers[i] if masks is not None else None
        slab = _layer_slab(w, mask)
        group_total += lw[i] * gw[i] * float(_smoothed_norms(slab, spec.smoothing_eps).sum())
        if spec.is_sparse:
            l1_total += lw[i] * float(np.abs(slab).sum())
    if spec.is_sparse:
        return (1.0 - spec.alpha) * group_total + spec.alpha * l1_total
    return group_total


def reg_subgrad(params: NetworkParams, spec: RegularizerSpec,
                masks: NeuronMask | None = None) -> dict[str, np.ndarray]:
    """Exact gradient of reg_value, keyed like NetworkParams.trainable().

    Bias and batch-norm entries stay at zero. Masked-out rows get exactly
    zero. sign(0) contributes 0 to the L1 part.
    """
    masks = _check_masks(params, spec, masks)
    grads = zero_like_grads(params)
    if spec.kind == "none":
        return grads
    ws = params.weight_matrices()
    if spec.kind == "l1":
        for i, w in enumerate(ws):
            grads[f"w{i}"] = np.sign(w)
        return grads
    if spec.kind == "l2":
        for i, w in enumerate(ws):
            grads[f"w{i}"] = 2.0 * w
        return grads

    gw = _group_weights(params, spec)
    lw = _layer_weights(params, spec)
    for i, w in enumerate(ws):
        mask = masks.layers[i] if masks is not None else None
        slab = _layer_slab(w, mask)
        denom = _smoothed_norms(slab, spec.smoothing_eps)
        g_slab = slab / denom[:, None]
        scale = lw[i] * gw[i]
        if spec.is_sparse:
            g_slab = (1.0 - spec.alpha) * scale * g_slab + (spec.alpha * lw[i]) * np.sign(slab)
        else:
            g_slab = scale * g_slab
        if slab is w:
            grads[f"w{i}"] = g_slab
        else:
            full = np.zeros_like(w)
            start = _suffix_start(mask)
            if start is not None:
                full[start:] = g_slab
            else:
                full[mask.keep] = g_slab
            grads[f"w{i}"] = full
    return grads


def regularized_param_count(params: NetworkParams, spec: RegularizerSpec,
                            masks: NeuronMask | None = None) -> int:
    """Number of scalar weights the penalty actually touches."""
    masks = _check_masks(params, spec, masks)
    if spec.kind == "none":
        return 0
    total = 0
    for i, w in enumerate(params.weight_matrices()):
        rows = w.shape[0]
        if masks is not None:
            rows -= masks.layers[i].n_zeros
        total += rows * w.shape[1]
    return total
