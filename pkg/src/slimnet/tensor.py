"""Dense float64 array primitives and seeded random streams.

Matrices are plain 2-D ``numpy.ndarray`` objects in C (row-major) order with
dtype float64. ``matmul`` delegates to the BLAS dgemm behind ``@``, whose
reduction per output element is serial over the inner dimension, so repeated
runs in one environment are bit-identical. Random streams are PCG64
generators keyed by explicit integer seeds; child streams are derived through
``numpy.random.SeedSequence`` spawn keys, so a stream can be forked per layer
or per epoch without the draws of one consumer shifting another's.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "RngStream",
    "as_matrix",
    "derive_seed",
    "matmul",
    "normal_draws",
    "row_slice",
]


def as_matrix(values) -> np.ndarray:
    """Coerce nested sequences or an array to a float64 C-order matrix."""
    m = np.ascontiguousarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a @ b with explicit shape validation."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def row_slice(w: np.ndarray, keep: Sequence[int] | np.ndarray) -> np.ndarray:
    """Sub-matrix of the kept rows, order preserved.

    ``keep`` is a sequence of row indices; an empty sequence yields a
    0 x cols matrix. Out-of-range indices raise IndexError.
    """
    idx = np.asarray(keep, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("keep must be a flat index sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= w.shape[0]):
        raise IndexError(f"row index out of range for {w.shape[0]} rows")
    if idx.size == 0:
        return np.empty((0, w.shape[1]), dtype=w.dtype)
    return w[idx]


class RngStream:
    """Seeded PCG64 stream with deterministic forking.

    The same seed always reproduces the same draw sequence; ``fork`` derives
    an independent child stream from the parent seed and integer keys, so the
    order in which siblings are consumed does not matter.
    """

    def __init__(self, seed: int, _keys: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._keys = _keys
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_keys))
        )

    def fork(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self._keys + tuple(int(k) for k in keys))

    def normal(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        if std < 0:
            raise ParameterError(f"std must be >= 0, got {std}")
        return self._gen.normal(mean, std, size=n)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        return self._gen.permutation(n)[:k]

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)


def normal_draws(rng: RngStream, n: int, mean: float, std: float) -> np.ndarray:
    """n pseudo-random normal draws from the stream."""
    return rng.normal(n, mean, std)


def derive_seed(base_seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed from a base seed and integer keys."""
    seq = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def finite_or_raise(arrays: Iterable[np.ndarray], context: str) -> None:
    """Raise NumericalError naming ``context`` if any entry is non-finite."""
    from .errors import NumericalError

    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite values in {context}")
