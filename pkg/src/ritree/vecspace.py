"""Dense and sparse vector arithmetic.

Dense vectors are plain 1-d float64 ``numpy`` arrays. Sparse vectors are
:class:`SparseVector` instances holding sorted ``(index, value)`` pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatchError, EmptyInputError, ZeroVectorError

__all__ = [
    "SparseVector",
    "unit_normalize",
    "squared_euclidean",
    "accumulate",
    "weighted_mean",
]


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Sparse vector with strictly increasing indices and no stored zeros.

    Parameters
    ----------
    indices : array-like of int
        Non-zero dimensions, strictly increasing, each ``< dim``.
    values : array-like of float
        Value at each index. Must be non-zero and finite.
    dim : int
        Declared dimensionality.
    """

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        val = np.asarray(self.values, dtype=np.float64).ravel()
        if idx.shape != val.shape:
            raise ValueError("indices and values must have the same length")
        if self.dim < 0:
            raise ValueError("dim must be non-negative")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"indices out of range for dim={self.dim}")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
            if np.any(val == 0):
                raise ValueError("explicit zeros are not stored")
            if not np.all(np.isfinite(val)):
                raise ValueError("values must be finite")
        idx.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "dim", int(self.dim))

    @classmethod
    def from_pairs(cls, pairs, dim):
        """Build from unordered ``(index, value)`` pairs; zeros are dropped and
        repeated indices summed."""
        acc = {}
        for i, v in pairs:
            acc[int(i)] = acc.get(int(i), 0.0) + float(v)
        items = sorted((i, v) for i, v in acc.items() if v != 0)
        if not items:
            return cls(np.empty(0, np.int64), np.empty(0), dim)
        idx, val = zip(*items)
        return cls(np.array(idx), np.array(val), dim)

    @classmethod
    def from_dense(cls, x):
        x = np.asarray(x, dtype=np.float64).ravel()
        nz = np.flatnonzero(x)
        return cls(nz, x[nz], x.size)

    @property
    def nnz(self):
        return int(self.indices.size)

    def to_dense(self):
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.dim, self.indices.tobytes(), self.values.tobytes()))


def _as_vector(v):
    return np.asarray(v, dtype=np.float64).ravel()


def unit_normalize(v):
    """Scale ``v`` to unit Euclidean norm.

    Raises
    ------
    ZeroVectorError
        If ``v`` has zero norm.
    """
    v = _as_vector(v)
    norm = np.linalg.norm(v)
    if norm == 0 or not np.isfinite(norm):
        raise ZeroVectorError("cannot normalize a zero (or non-finite) vector")
    out = v / norm
    # one correction pass pulls the norm to within an ulp or two of 1
    return out / np.linalg.norm(out)


def squared_euclidean(a, b):
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension {a.size} != {b.size}")
    diff = a - b
    return float(diff @ diff)


def accumulate(acc, sv, weight=1.0):
    """Add ``weight * sv`` into the dense accumulator ``acc`` in place.

    ``acc`` must be a float64 array; it is returned for convenience.
    """
    if acc.shape != (sv.dim,):
        raise DimensionMismatchError(
            f"accumulator has shape {acc.shape}, sparse vector has dim {sv.dim}"
        )
    if weight != 0 and sv.nnz:
        # indices are unique so fancy-index addition is safe
        acc[sv.indices] += weight * sv.values
    return acc


def weighted_mean(vectors, weights):
    vectors = np.asarray(vectors, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if vectors.size == 0 or vectors.shape[0] == 0:
        raise EmptyInputError("weighted_mean of no vectors")
    if vectors.ndim != 2:
        raise DimensionMismatchError("vectors must share one dimensionality")
    if weights.shape[0] != vectors.shape[0]:
        raise DimensionMismatchError(
            f"{vectors.shape[0]} vectors but {weights.shape[0]} weights"
        )
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    return weights @ vectors / weights.sum()
