"""Ground-truth-aware error measures for factor pairs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .linalg import as_dense, truncated_svd


def balanced_factors(M, r, seed=0):
    """Return ``(L S^1/2, R S^1/2, S)`` from the top-``r`` SVD of ``M``."""
    trip = truncated_svd(as_dense(M), r, seed=seed)
    root = np.sqrt(trip.sigma)
    return trip.L * root, trip.R * root, trip.sigma


def balanced_from_product(A, B):
    """Balanced factors of ``A @ B.T`` computed through two thin QRs."""
    qa, ra = np.linalg.qr(A)
    qb, rb = np.linalg.qr(B)
    P, s, Wt = np.linalg.svd(ra @ rb.T)
    root = np.sqrt(s)
    return (qa @ P) * root, (qb @ Wt.T) * root, s


class Alignment(NamedTuple):
    Q: np.ndarray
    degenerate: bool


def procrustes_rotation(U, V, U_star, V_star):
    """Orthonormal ``Q`` minimising ``||U - U* Q||^2 + ||V - V* Q||^2``.

    Stacks ``F = [U; V]`` and ``F* = [U*; V*]``; with ``F^T F* = Q1 L Q2^T``
    the minimiser is ``Q = Q2 Q1^T``. ``degenerate`` is set when ``F^T F*``
    is rank deficient, in which case the maximiser is not unique and the
    completion from the SVD is returned.
    """
    F = np.vstack([U, V])
    F_star = np.vstack([U_star, V_star])
    if F.shape != F_star.shape:
        raise ValueError(f"factor shapes differ: {F.shape} vs {F_star.shape}")
    Q1, lam, Q2t = np.linalg.svd(F.T @ F_star)
    degenerate = bool(lam.size and lam[-1] <= 1e-12 * max(lam[0], 1e-300))
    return Alignment(Q2t.T @ Q1.T, degenerate)


def factor_distance(U, V, U_star, V_star):
    """Rotation-minimised Frobenius distance between two factor pairs."""
    Q, _ = procrustes_rotation(U, V, U_star, V_star)
    du = np.linalg.norm(U - U_star @ Q)
    dv = np.linalg.norm(V - V_star @ Q)
    return float(np.hypot(du, dv))


def reconstruction_error(U, V, M_star):
    """``(||U V^T - M*||_F, relative)`` with ``0/0`` read as 0."""
    M_star = np.asarray(M_star, dtype=float)
    err = float(np.linalg.norm(U @ V.T - M_star))
    ref = float(np.linalg.norm(M_star))
    return err, (err / ref if ref > 0 else (0.0 if err == 0 else np.inf))


def factored_reconstruction_error(U, V, A, B):
    """``||U V^T - A B^T||_F`` through ``r x r`` Gram matrices, no dense product."""
    sq = (np.sum((U.T @ U) * (V.T @ V))
          - 2.0 * np.sum((U.T @ A) * (V.T @ B))
          + np.sum((A.T @ A) * (B.T @ B)))
    return float(np.sqrt(max(sq, 0.0)))


def incoherence_of(M, r, seed=0):
    """Estimated incoherence of the top-``r`` singular subspaces of ``M``.

    ``max(d1/r * max_i ||L_i||^2, d2/r * max_j ||R_j||^2)``.
    """
    M = as_dense(M)
    if r < 1:
        raise ValueError("r must be >= 1")
    d1, d2 = M.shape
    trip = truncated_svd(M, r, seed=seed)
    left = d1 / r * float(np.max(np.sum(trip.L ** 2, axis=1)))
    right = d2 / r * float(np.max(np.sum(trip.R ** 2, axis=1)))
    return max(left, right)


@dataclass
class GroundTruth:
    """Known low-rank component for evaluating a run.

    ``U_star``/``V_star`` are balanced (``U*^T U* = V*^T V*``). The dense
    ``M`` is optional; errors are computed from the factors so that large
    instances never need the full product.
    """

    U_star: np.ndarray
    V_star: np.ndarray
    sigma: np.ndarray
    M: Optional[np.ndarray] = None

    @classmethod
    def from_matrix(cls, M, r, seed=0):
        U, V, s = balanced_factors(M, r, seed=seed)
        return cls(U, V, s, np.asarray(M, dtype=float))

    @classmethod
    def from_factors(cls, A, B):
        U, V, s = balanced_from_product(A, B)
        return cls(U, V, s)

    @property
    def kappa(self):
        return float(self.sigma[0] / self.sigma[-1]) if self.sigma[-1] > 0 else np.inf

    @property
    def sigma1(self):
        return float(self.sigma[0])

    @property
    def norm(self):
        return float(np.linalg.norm(self.sigma))

    def distance(self, U, V):
        return factor_distance(U, V, self.U_star, self.V_star)

    def reconstruction_error(self, U, V):
        """Absolute and relative Frobenius error of ``U V^T``."""
        err = factored_reconstruction_error(U, V, self.U_star, self.V_star)
        ref = self.norm
        return err, (err / ref if ref > 0 else (0.0 if err == 0 else np.inf))
