"""Adam updates over every trainable array of the network.

Defaults are the original recommendations (lr 0.001, beta1 0.9, beta2
0.999, eps 1e-8). There is no weight decay here and no schedule: all
regularization reaches the optimizer through the objective gradient.
Running batch-norm statistics are not optimizer state and are never touched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .model import NetworkParams


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")


def adam_step(state: AdamState, params: NetworkParams,
              grads: dict[str, np.ndarray]) -> tuple[NetworkParams, AdamState]:
    """One in-place Adam step; returns the same objects for chaining.

    Moment arrays are created lazily on the first step. Gradient keys must
    match the network's trainable keys exactly.
    """
    keys = [k for k, _ in params.trainable()]
    if set(grads) - set(keys):
        raise ShapeError(f"unexpected gradient keys: {sorted(set(grads) - set(keys))}")
    state.t += 1
    correct1 = 1.0 - state.beta1 ** state.t
    correct2 = 1.0 - state.beta2 ** state.t
    for key, arr in params.trainable():
        g = grads[key]
        if g.shape != arr.shape:
            raise ShapeError(f"gradient {key} shape {g.shape} != parameter shape {arr.shape}")
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient entries in {key}")
        if key not in state.m:
            state.m[key] = np.zeros_like(arr)
            state.v[key] = np.zeros_like(arr)
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / correct1
        v_hat = v / correct2
        arr -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
