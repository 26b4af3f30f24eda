"""Dense vector and sparse-row primitives shared by every other module.

Everything is 64-bit floating point. Reductions run in a single fixed
accumulation order (numpy's, over contiguous arrays), so reruns with
identical inputs are bit-identical on a given platform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np
from scipy import sparse

from .errors import DataError, UsageError

# A parameter vector is a 1-d contiguous float64 array of length d.
Vector = np.ndarray


def as_vector(values) -> Vector:
    """Coerce to a contiguous float64 1-d array."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise UsageError(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


def dot(a: Vector, b: Vector) -> float:
    """Inner product with a fixed accumulation order."""
    if a.shape != b.shape:
        raise UsageError(f"dot: dimension mismatch {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def axpy(alpha: float, x: Vector, y: Vector) -> Vector:
    """Return alpha*x + y elementwise."""
    if x.shape != y.shape:
        raise UsageError(f"axpy: dimension mismatch {x.shape} vs {y.shape}")
    return alpha * x + y


def norm(x: Vector) -> float:
    return math.sqrt(dot(x, x))


@dataclass
class SparseExample:
    """One training example stored as a sparse feature row.

    indices are strictly increasing feature ids; label is -1 or +1.
    """

    indices: np.ndarray
    values: np.ndarray
    label: int

    def __post_init__(self):
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.indices.shape != self.values.shape:
            raise DataError("indices and values differ in length")
        if self.indices.size and np.any(np.diff(self.indices) <= 0):
            raise DataError("feature indices must be strictly increasing")
        if self.indices.size and self.indices[0] < 0:
            raise DataError("negative feature index")
        if self.label not in (-1, 1):
            raise DataError(f"label must be -1 or +1, got {self.label}")

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def densify(self, dimension: int) -> Vector:
        out = np.zeros(dimension, dtype=np.float64)
        out[self.indices] = self.values
        return out


def sparse_dot(row: SparseExample, w: Vector) -> float:
    """Inner product of a sparse row with a dense vector."""
    if row.indices.size and int(row.indices[-1]) >= w.shape[0]:
        raise DataError(
            f"feature index {int(row.indices[-1])} out of range for d={w.shape[0]}"
        )
    return float(np.dot(row.values, w[row.indices]))


@dataclass
class Dataset:
    """A collection of n sparse examples over a fixed dimension d."""

    examples: list
    dimension: int
    _csr: object = field(default=None, init=False, repr=False, compare=False)
    _labels: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise DataError("dimension must be >= 1")
        if len(self.examples) < 1:
            raise DataError("dataset must contain at least one example")
        for i, ex in enumerate(self.examples):
            if ex.nnz and int(ex.indices[-1]) >= self.dimension:
                raise DataError(
                    f"example {i}: index {int(ex.indices[-1])} >= d={self.dimension}"
                )

    @property
    def count(self) -> int:
        return len(self.examples)

    # alias used throughout
    @property
    def n(self) -> int:
        return len(self.examples)

    @property
    def d(self) -> int:
        return self.dimension

    def to_arrays(self):
        """CSR feature matrix and the +-1 label vector (built once, cached)."""
        if self._csr is None:
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            for i, ex in enumerate(self.examples):
                indptr[i + 1] = indptr[i] + ex.nnz
            indices = np.concatenate(
                [ex.indices for ex in self.examples]
            ) if indptr[-1] else np.zeros(0, dtype=np.int64)
            values = np.concatenate(
                [ex.values for ex in self.examples]
            ) if indptr[-1] else np.zeros(0, dtype=np.float64)
            self._csr = sparse.csr_matrix(
                (values, indices, indptr), shape=(self.n, self.dimension)
            )
            self._labels = np.array(
                [ex.label for ex in self.examples], dtype=np.float64
            )
        return self._csr, self._labels
