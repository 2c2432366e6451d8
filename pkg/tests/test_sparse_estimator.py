import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fastrpca.linalg import SupportedMatrix, operator_norm_estimate
from fastrpca.sparse_estimator import (SparsityBudget, hard_threshold, hard_threshold_on_support,
                                       is_in_sparsity_class)
from oracles import brute_threshold, random_sparse_class

int_matrices = arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
                      elements=st.integers(-9, 9).map(float))
eighths = st.integers(0, 8).map(lambda k: k / 8)


def test_budget_counts():
    b = SparsityBudget(1 / 3, 3, 3)
    assert (b.k_row, b.k_col) == (1, 1)
    b = SparsityBudget(0.0, 5, 7)
    assert (b.k_row, b.k_col) == (0, 0)
    b = SparsityBudget(0.5, 4, 7)
    assert (b.k_row, b.k_col) == (3, 2)
    with pytest.raises(ValueError):
        SparsityBudget(1.5, 2, 2)


def test_diagonal_dominant_example():
    A = np.array([[5, 1, 0], [2, 4, 1], [1, 3, 6]], dtype=float)
    S = hard_threshold(A, SparsityBudget.for_shape(1 / 3, A.shape))
    assert list(zip(S.rows.tolist(), S.cols.tolist(), S.values.tolist())) == [
        (0, 0, 5.0), (1, 1, 4.0), (2, 2, 6.0)]
    assert np.array_equal(S.to_dense(), brute_threshold(A, 1 / 3))


def test_zero_matrix_is_empty():
    assert hard_threshold(np.zeros((4, 5)), 0.5).nnz == 0


def test_full_budget_keeps_every_nonzero():
    A = np.array([[1.0, 0.0, -2.0], [0.0, 3.0, 4.0]])
    assert np.array_equal(hard_threshold(A, 1.0).to_dense(), A)


def test_ties_prefer_smaller_coordinate():
    # every row picks column 0, and column 0 only has room for row 0
    A = np.ones((3, 3))
    S = hard_threshold(A, 1 / 3)
    assert list(zip(S.rows.tolist(), S.cols.tolist())) == [(0, 0)]
    assert np.array_equal(S.to_dense(), brute_threshold(A, 1 / 3))


def test_budget_shape_mismatch():
    with pytest.raises(ValueError):
        hard_threshold(np.ones((2, 3)), SparsityBudget(0.5, 3, 2))


@given(int_matrices, eighths)
def test_matches_brute_force(A, f):
    assert np.array_equal(hard_threshold(A, f).to_dense(), brute_threshold(A, f))


@given(int_matrices, eighths)
def test_closure_and_idempotence(A, f):
    S = hard_threshold(A, f)
    assert is_in_sparsity_class(S, f)
    again = hard_threshold(S.to_dense(), f)
    assert np.array_equal(again.to_dense(), S.to_dense())


def test_lone_support_entry_kept():
    A = SupportedMatrix((4, 5), np.array([2]), np.array([3]), np.array([-9.0]))
    S = hard_threshold_on_support(A, SparsityBudget(0.25, 4, 5))
    assert (S.rows.tolist(), S.cols.tolist(), S.values.tolist()) == ([2], [3], [-9.0])


def test_empty_support():
    assert hard_threshold_on_support(SupportedMatrix.empty((5, 5)), 0.4).nnz == 0


@given(int_matrices, eighths, st.data())
def test_support_version_matches_dense_of_zero_filled(A, f, data):
    mask = data.draw(arrays(np.bool_, A.shape))
    sup = SupportedMatrix.from_dense(A, mask=mask)
    S = hard_threshold_on_support(sup, f)
    assert np.array_equal(S.to_dense(), brute_threshold(A * mask, f))
    assert np.all(mask[S.rows, S.cols])


def test_sparsity_class_examples():
    assert is_in_sparsity_class(SupportedMatrix.from_dense(np.eye(4)), 0.25)
    row = np.zeros((4, 4))
    row[0] = 1
    assert not is_in_sparsity_class(SupportedMatrix.from_dense(row), 0.5)
    assert is_in_sparsity_class(np.zeros((3, 3)), 0.0)


def test_operator_norm_bound_small():
    rng = np.random.default_rng(11)
    for _ in range(50):
        d, k = 40, int(rng.integers(1, 6))
        A = random_sparse_class(rng, d, k)
        assert is_in_sparsity_class(A, k / d)
        bound = (k / d) * d * np.abs(A).max()
        assert operator_norm_estimate(A) <= bound + 1e-9
        assert np.linalg.norm(A, 2) <= bound + 1e-9
