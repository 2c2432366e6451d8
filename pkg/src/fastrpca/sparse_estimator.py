"""Row/column order-statistic hard thresholding.

An entry survives only if its magnitude is among the ``k_row`` largest of its
row *and* among the ``k_col`` largest of its column. Ties at the boundary go
to the entry with the smaller ``(i, j)`` coordinate, so exactly ``k`` slots
exist per row and per column and the result always lies in the sparsity
class of the budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import SupportedMatrix, as_dense


@dataclass(frozen=True)
class SparsityBudget:
    """Per-row and per-column entry caps for a ``rows x cols`` matrix."""

    fraction: float
    rows: int
    cols: int

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in [0, 1], got {self.fraction}")

    @property
    def k_row(self):
        # small epsilon guards floor(1/3 * 3) == 0 style float round-off
        return min(self.cols, math.floor(self.fraction * self.cols + 1e-9))

    @property
    def k_col(self):
        return min(self.rows, math.floor(self.fraction * self.rows + 1e-9))

    @classmethod
    def for_shape(cls, fraction, shape):
        return cls(float(fraction), int(shape[0]), int(shape[1]))


def _dense_top_k_mask(mag, k):
    """Boolean mask of the ``k`` largest entries of each row of ``mag``.

    Ties at the k-th value are filled left to right (smaller column first).
    """
    n_rows, n_cols = mag.shape
    if k <= 0:
        return np.zeros(mag.shape, dtype=bool)
    if k >= n_cols:
        return np.ones(mag.shape, dtype=bool)
    kth = np.partition(mag, n_cols - k, axis=1)[:, n_cols - k:n_cols - k + 1]
    keep = mag >= kth
    tied = np.flatnonzero(keep.sum(axis=1) > k)
    if tied.size:
        sub, t = mag[tied], kth[tied]
        at = sub == t
        room = k - (sub > t).sum(axis=1, keepdims=True)
        keep[tied] = (sub > t) | (at & (np.cumsum(at, axis=1) <= room))
    return keep


def hard_threshold(A, budget):
    """Keep entries that are top-``k_row`` in their row and top-``k_col`` in their column.

    Parameters
    ----------
    A : array_like, shape (d1, d2)
    budget : SparsityBudget or float
        A bare float is read as the fraction for ``A``'s shape.

    Returns
    -------
    SupportedMatrix
        Only the kept nonzero entries, in row-major order.
    """
    A = as_dense(A)
    if not isinstance(budget, SparsityBudget):
        budget = SparsityBudget.for_shape(budget, A.shape)
    if (budget.rows, budget.cols) != A.shape:
        raise ValueError(f"budget is for {(budget.rows, budget.cols)}, matrix is {A.shape}")
    k_row, k_col = budget.k_row, budget.k_col
    if k_row == 0 or k_col == 0:
        return SupportedMatrix.empty(A.shape)
    mag = np.abs(A)
    keep = _dense_top_k_mask(mag, k_row)
    keep &= _dense_top_k_mask(mag.T, k_col).T
    keep &= A != 0
    return SupportedMatrix.from_dense(A, mask=keep)


def _segment_top_k(mag, n_seg, slots, k):
    """Top-``k`` mask within segments laid out by ``slots = (width, flat)``.

    Padding cells hold -1 so they never outrank a stored entry; ties resolve
    to the lower position inside the segment.
    """
    width, flat = slots
    padded = np.full(n_seg * width, -1.0)
    padded[flat] = mag
    return _dense_top_k_mask(padded.reshape(n_seg, width), k).ravel()[flat]


def support_keep_mask(A, budget):
    """Boolean mask over ``A``'s stored entries selected by the thresholding rule."""
    if not isinstance(budget, SparsityBudget):
        budget = SparsityBudget.for_shape(budget, A.shape)
    if (budget.rows, budget.cols) != A.shape:
        raise ValueError(f"budget is for {(budget.rows, budget.cols)}, matrix is {A.shape}")
    k_row, k_col = budget.k_row, budget.k_col
    if k_row == 0 or k_col == 0 or A.nnz == 0:
        return np.zeros(A.nnz, dtype=bool)
    d1, d2 = A.shape
    mag = np.abs(A.values)
    keep = _segment_top_k(mag, d1, A.row_slots, k_row)
    keep &= _segment_top_k(mag, d2, A.col_slots, k_col)
    keep &= A.values != 0
    return keep


def hard_threshold_on_support(A, budget):
    """:func:`hard_threshold` of the matrix that is zero off ``A``'s support.

    Works on the stored entries only (``O(nnz log nnz)``); positions outside
    the support are never selected.
    """
    return A.select(support_keep_mask(A, budget))


def is_in_sparsity_class(A, fraction):
    """True iff every row/column holds at most ``fraction`` of its length in nonzeros."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if not isinstance(A, SupportedMatrix):
        A = SupportedMatrix.from_dense(A)
    d1, d2 = A.shape
    # tolerance matches the floor in SparsityBudget
    ok_rows = np.all(A.row_counts(nonzero_only=True) <= fraction * d2 + 1e-9)
    ok_cols = np.all(A.col_counts(nonzero_only=True) <= fraction * d1 + 1e-9)
    return bool(ok_rows and ok_cols)
