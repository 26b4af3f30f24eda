import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mblbfgs import DataError, Dataset, SparseExample, UsageError, axpy, dot, sparse_dot
from mblbfgs.linalg import as_vector, norm


def vec(*xs):
    return np.array(xs, dtype=np.float64)


class TestDot:
    def test_hand_arithmetic(self):
        assert dot(vec(1, 2, 3), vec(4, 5, 6)) == 32.0

    def test_zero(self):
        x = np.random.default_rng(0).normal(size=17)
        assert dot(x, np.zeros(17)) == 0.0

    def test_against_compensated_summation(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            a = rng.normal(size=1000) * rng.choice([1e-6, 1.0, 1e6], size=1000)
            b = rng.normal(size=1000)
            exact = math.fsum(float(x) * float(y) for x, y in zip(a, b))
            assert abs(dot(a, b) - exact) <= 1e-12 * max(abs(exact), 1e-30)

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            dot(vec(1, 2), vec(1, 2, 3))

    def test_rerun_bit_identical(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=257), rng.normal(size=257)
        assert dot(a, b) == dot(a.copy(), b.copy())

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetric_and_psd(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=9), rng.normal(size=9)
        assert dot(x, y) == dot(y, x)
        assert dot(x, x) >= 0
        assert dot(np.zeros(9), np.zeros(9)) == 0.0


class TestAxpy:
    def test_identity(self):
        x, y = vec(1, 2, 3), vec(4, 5, 6)
        assert np.array_equal(axpy(0.0, x, y), y)

    def test_cancellation(self):
        x = vec(3, -7, 0.5)
        assert np.array_equal(axpy(1.0, x, -x), np.zeros(3))

    def test_hand_arithmetic(self):
        assert np.array_equal(axpy(2.0, vec(1, 1), vec(3, 4)), vec(5, 6))

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            axpy(1.0, vec(1), vec(1, 2))

    @given(st.integers(0, 2**31 - 1), st.floats(-10, 10), st.floats(-10, 10))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=6), rng.normal(size=6)
        lhs = axpy(a, x, axpy(b, x, y))
        rhs = axpy(a + b, x, y)
        assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * (1 + np.abs(rhs).max()))


class TestSparse:
    def test_empty_row(self):
        row = SparseExample(indices=np.array([], dtype=np.int64),
                            values=np.array([]), label=1)
        assert sparse_dot(row, vec(1, 2, 3)) == 0.0

    def test_single_entry(self):
        row = SparseExample(indices=np.array([0]), values=np.array([2.0]), label=1)
        assert sparse_dot(row, vec(3, 9, 9)) == 6.0

    def test_against_densified(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            d = 40
            nnz = int(rng.integers(1, 15))
            idx = np.sort(rng.choice(d, size=nnz, replace=False))
            row = SparseExample(indices=idx, values=rng.normal(size=nnz), label=-1)
            w = rng.normal(size=d)
            assert sparse_dot(row, w) == pytest.approx(dot(row.densify(d), w), rel=1e-14)

    def test_out_of_range_index(self):
        row = SparseExample(indices=np.array([5]), values=np.array([1.0]), label=1)
        with pytest.raises(DataError):
            sparse_dot(row, vec(1, 2, 3))

    def test_indices_must_increase(self):
        with pytest.raises(DataError):
            SparseExample(indices=np.array([3, 1]), values=np.array([1.0, 2.0]), label=1)
        with pytest.raises(DataError):
            SparseExample(indices=np.array([2, 2]), values=np.array([1.0, 2.0]), label=1)

    def test_label_convention(self):
        with pytest.raises(DataError):
            SparseExample(indices=np.array([0]), values=np.array([1.0]), label=0)


class TestDataset:
    def test_validation(self):
        good = SparseExample(indices=np.array([1]), values=np.array([1.0]), label=1)
        with pytest.raises(DataError):
            Dataset(examples=[], dimension=3)
        with pytest.raises(DataError):
            Dataset(examples=[good], dimension=1)  # index 1 >= d
        ds = Dataset(examples=[good], dimension=2)
        assert ds.n == 1 and ds.d == 2

    def test_to_arrays_round_trip(self):
        rng = np.random.default_rng(9)
        examples = []
        for _ in range(8):
            nnz = int(rng.integers(0, 5))
            idx = np.sort(rng.choice(10, size=nnz, replace=False))
            examples.append(SparseExample(indices=idx, values=rng.normal(size=nnz),
                                          label=int(rng.choice([-1, 1]))))
        ds = Dataset(examples=examples, dimension=10)
        X, labels = ds.to_arrays()
        assert X.shape == (8, 10)
        for i, ex in enumerate(examples):
            assert np.array_equal(np.asarray(X[i].todense()).ravel(), ex.densify(10))
            assert labels[i] == ex.label


def test_as_vector_rejects_matrices():
    with pytest.raises(UsageError):
        as_vector(np.zeros((2, 2)))


def test_norm():
    assert norm(vec(3, 4)) == 5.0
