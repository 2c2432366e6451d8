"""Matrix types and the truncated SVD used throughout the package.

Dense matrices are plain 2-D float64 ``numpy`` arrays. Sparse matrices with
an explicit support (corruption estimates, observation masks) are held in
:class:`SupportedMatrix`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg  # noqa: F401  (registers sp.linalg)


class SVDConvergenceError(RuntimeError):
    """Subspace iteration did not meet its tolerance within ``max_sweeps``.

    The last iterate is kept on ``result`` so callers that only need an
    approximate factorization can still use it.
    """

    def __init__(self, residual, sweeps, result=None):
        super().__init__(
            f"svd did not converge after {sweeps} sweeps (relative residual {residual:.3e})"
        )
        self.residual = residual
        self.sweeps = sweeps
        self.result = result


def as_dense(a):
    """Validate and return ``a`` as a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains NaN or Inf entries")
    return arr


_STRUCTURE_CACHE = ("row_ptr", "col_order", "col_ptr", "row_pos", "col_pos",
                    "row_slots", "col_slots")


@dataclass(frozen=True, eq=False)
class SupportedMatrix:
    """Coordinate-format matrix with an explicit support.

    Entries are stored in canonical row-major order and coordinates are
    unique. Stored zeros are allowed: they mark positions that belong to the
    support (e.g. an observed entry whose value happens to be 0).
    """

    shape: tuple
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self._checked:
            return
        d1, d2 = (int(s) for s in self.shape)
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        if not (rows.size == cols.size == vals.size):
            raise ValueError("rows, cols and values must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= d1 or cols.min() < 0 or cols.max() >= d2:
                raise ValueError("coordinates out of bounds for shape %r" % ((d1, d2),))
        if not np.all(np.isfinite(vals)):
            raise ValueError("values contain NaN or Inf")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate coordinate ({rows[k]}, {cols[k]})")
        object.__setattr__(self, "shape", (d1, d2))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_checked", True)

    # -- constructors -------------------------------------------------
    @classmethod
    def empty(cls, shape):
        z = np.zeros(0, dtype=np.int64)
        return cls(tuple(shape), z, z, np.zeros(0))

    @classmethod
    def from_dense(cls, a, mask=None):
        """Sparsify ``a``; the support is ``mask`` if given, else the nonzeros."""
        a = as_dense(a)
        if mask is None:
            mask = a != 0
        rows, cols = np.nonzero(mask)
        return cls(a.shape, rows, cols, a[rows, cols])

    def _trusted(self, rows, cols, values):
        # caller guarantees canonical order and uniqueness
        return SupportedMatrix(self.shape, rows, cols, values, _checked=True)

    def with_values(self, values):
        """Same support, new values (index structures are shared)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ValueError("values must match the support size")
        out = self._trusted(self.rows, self.cols, values)
        for name in _STRUCTURE_CACHE:
            if name in self.__dict__:
                out.__dict__[name] = self.__dict__[name]
        return out

    def select(self, keep):
        """Sub-matrix on the entries where boolean ``keep`` is true."""
        return self._trusted(self.rows[keep], self.cols[keep], self.values[keep])

    # -- views --------------------------------------------------------
    @property
    def nnz(self):
        return int(self.rows.size)

    @cached_property
    def row_ptr(self):
        """Row ``i`` owns entry positions ``row_ptr[i]:row_ptr[i+1]``."""
        return np.searchsorted(self.rows, np.arange(self.shape[0] + 1))

    @cached_property
    def col_order(self):
        """Entry positions sorted column-major (ties by row)."""
        return np.lexsort((self.rows, self.cols))

    @cached_property
    def col_ptr(self):
        return np.searchsorted(self.cols[self.col_order], np.arange(self.shape[1] + 1))

    @cached_property
    def row_pos(self):
        """Position of each entry inside its row."""
        return np.arange(self.nnz) - self.row_ptr[self.rows]

    @cached_property
    def col_pos(self):
        """Position inside its column of each entry of ``col_order``."""
        cols = self.cols[self.col_order]
        return np.arange(self.nnz) - self.col_ptr[cols]

    @cached_property
    def row_slots(self):
        """``(width, flat)``: entry ``e`` sits at ``flat[e]`` of a ``d1 x width``
        grid holding each row left-aligned in column order."""
        width = int(self.row_pos.max()) + 1 if self.nnz else 0
        return width, self.rows * width + self.row_pos

    @cached_property
    def col_slots(self):
        """Column analogue of :attr:`row_slots` (``d2 x width``, rows in order)."""
        pos = np.empty(self.nnz, dtype=np.int64)
        pos[self.col_order] = self.col_pos
        width = int(pos.max()) + 1 if self.nnz else 0
        return width, self.cols * width + pos

    def row_index(self, i):
        """Positions (into ``rows``/``cols``/``values``) of row ``i``'s entries."""
        return np.arange(self.row_ptr[i], self.row_ptr[i + 1])

    def col_index(self, j):
        return self.col_order[self.col_ptr[j]:self.col_ptr[j + 1]]

    def row_counts(self, nonzero_only=False):
        rows = self.rows[self.values != 0] if nonzero_only else self.rows
        return np.bincount(rows, minlength=self.shape[0])

    def col_counts(self, nonzero_only=False):
        cols = self.cols[self.values != 0] if nonzero_only else self.cols
        return np.bincount(cols, minlength=self.shape[1])

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.values
        return out

    def mask(self):
        out = np.zeros(self.shape, dtype=bool)
        out[self.rows, self.cols] = True
        return out

    @cached_property
    def csr(self):
        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=self.shape)

    def __matmul__(self, x):
        return self.csr @ x

    @property
    def T(self):
        return self.csr.T

    def frobenius_norm(self):
        return float(np.linalg.norm(self.values))

    def __repr__(self):
        return f"SupportedMatrix(shape={self.shape}, nnz={self.nnz})"


@dataclass(frozen=True)
class SpectralTriple:
    """Top-``r`` singular triple ``L diag(sigma) R^T``."""

    L: np.ndarray
    sigma: np.ndarray
    R: np.ndarray
    sweeps: int = 0

    @property
    def rank(self):
        return self.sigma.size

    def reconstruct(self):
        return (self.L * self.sigma) @ self.R.T


def _orth(x):
    q, _ = np.linalg.qr(x)
    return q


def _fix_signs(L, R):
    # largest-magnitude entry of each left vector made nonnegative
    if L.size == 0:
        return L, R
    idx = np.argmax(np.abs(L), axis=0)
    s = np.sign(L[idx, np.arange(L.shape[1])])
    s[s == 0] = 1.0
    return L * s, R * s


def truncated_svd(A, r, tol=1e-10, max_sweeps=500, seed=0):
    """Top-``r`` singular triple by randomized block subspace iteration.

    Parameters
    ----------
    A : ndarray or sparse matrix
        Anything supporting ``A @ X`` and ``A.T @ X``.
    r : int
        Target rank, ``1 <= r <= min(A.shape)``.
    tol : float
        Stop once the top-``r`` singular values change by at most ``tol``
        (relative) between sweeps and ``||A R - L Sigma||_F <= tol ||A||_F``.
    max_sweeps : int
    seed : int
        Seed of the Gaussian starting block.

    Returns
    -------
    SpectralTriple

    Raises
    ------
    SVDConvergenceError
        With the last residual and iterate attached.
    """
    if isinstance(A, SupportedMatrix):
        A = A.csr
    elif not sp.issparse(A):
        A = as_dense(A)
    d1, d2 = A.shape
    if not 1 <= r <= min(d1, d2):
        raise ValueError(f"rank {r} outside [1, {min(d1, d2)}]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    k = min(r + 4, d1, d2)
    normA = float(sp.linalg.norm(A) if sp.issparse(A) else np.linalg.norm(A))

    rng = np.random.default_rng(seed)
    Q = _orth(np.asarray(A @ rng.standard_normal((d2, k))))
    prev = None
    result, resid = None, np.inf
    for sweep in range(1, max_sweeps + 1):
        Z = np.asarray(A.T @ Q)                      # d2 x k, A^T Q
        W, s, Pt = np.linalg.svd(Z, full_matrices=False)
        L = Q @ Pt.T                                 # A^T L = W diag(s) exactly
        Y = np.asarray(A @ W)                        # next block, also residual
        resid = np.linalg.norm(Y[:, :r] - L[:, :r] * s[:r])
        sig = s[:r]
        if prev is None:
            change = np.inf
        else:
            scale = max(float(sig[0]), np.finfo(float).tiny)
            change = float(np.max(np.abs(sig - prev))) / scale
        prev = sig
        Lr, Rr = _fix_signs(L[:, :r], W[:, :r])
        result = SpectralTriple(Lr, sig.copy(), Rr, sweep)
        if normA == 0.0:
            return result
        if change <= tol and resid <= tol * normA:
            return result
        Q = _orth(Y)
    raise SVDConvergenceError(resid / normA, max_sweeps, result)


def truncated_svd_sparse(A, r, tol=1e-10, max_sweeps=500, seed=0):
    """:func:`truncated_svd` of a :class:`SupportedMatrix` via sparse products.

    Each sweep costs ``O(nnz * r)``.
    """
    return truncated_svd(A.csr, r, tol=tol, max_sweeps=max_sweeps, seed=seed)


def operator_norm_estimate(A, tol=1e-8, max_sweeps=1000, seed=0):
    """Lower estimate of the largest singular value of ``A``.

    The returned value is a Ritz value, so it never exceeds ``sigma_1(A)``.
    """
    A = A.csr if isinstance(A, SupportedMatrix) else A
    if min(A.shape) == 0:
        return 0.0
    try:
        trip = truncated_svd(A, 1, tol=tol, max_sweeps=max_sweeps, seed=seed)
    except SVDConvergenceError as err:
        trip = err.result
    return float(trip.sigma[0])


def factored_operator_norm(U, V):
    """``sigma_1(U V^T)`` without forming the product (QR of each factor)."""
    _, ru = np.linalg.qr(U)
    _, rv = np.linalg.qr(V)
    return float(np.linalg.norm(ru @ rv.T, 2))
