"""Slow, obviously-correct reference implementations used only by the tests."""
import math

import numpy as np


def brute_threshold(A, fraction):
    """Sort every full row and column; keep entries inside both top-k sets.

    Ties are ordered by the smaller index, matching the (i, j) rule.
    """
    A = np.asarray(A, dtype=float)
    d1, d2 = A.shape
    k_row = min(d2, math.floor(fraction * d2 + 1e-9))
    k_col = min(d1, math.floor(fraction * d1 + 1e-9))
    in_row = np.zeros(A.shape, dtype=bool)
    in_col = np.zeros(A.shape, dtype=bool)
    for i in range(d1):
        order = sorted(range(d2), key=lambda j: (-abs(A[i, j]), j))
        in_row[i, order[:k_row]] = True
    for j in range(d2):
        order = sorted(range(d1), key=lambda i: (-abs(A[i, j]), i))
        in_col[order[:k_col], j] = True
    return np.where(in_row & in_col & (A != 0), A, 0.0)


def jacobi_singular_values(A, tol=1e-15, max_sweeps=100):
    """One-sided Jacobi SVD (Hestenes); singular values, descending."""
    A = np.array(A, dtype=float)
    if A.shape[0] < A.shape[1]:
        A = A.T
    W = A.copy()
    n = W.shape[1]
    for _ in range(max_sweeps):
        worst = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                a = W[:, i] @ W[:, i]
                b = W[:, j] @ W[:, j]
                c = W[:, i] @ W[:, j]
                if c == 0.0 or a == 0.0 or b == 0.0:
                    continue
                rel = abs(c) / (math.sqrt(a) * math.sqrt(b))
                if rel <= tol:
                    continue
                worst = max(worst, rel)
                zeta = (b - a) / (2.0 * c)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = cs * t
                wi = W[:, i].copy()
                W[:, i] = cs * wi - sn * W[:, j]
                W[:, j] = sn * wi + cs * W[:, j]
        if worst <= tol:
            break
    return np.sort(np.linalg.norm(W, axis=0))[::-1]


def dense_partial_loss(U, V, S, Y, mask, p):
    E = (U @ V.T + S - Y) * mask
    return 0.5 * float(np.sum(E * E)) / p


def central_difference(f, X, h=1e-6):
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        Xp = X.copy()
        Xm = X.copy()
        Xp[idx] += h
        Xm[idx] -= h
        G[idx] = (f(Xp) - f(Xm)) / (2 * h)
    return G


def random_sparse_class(rng, d, k):
    """Union of ``k`` random permutation supports: every row and column has <= k entries."""
    A = np.zeros((d, d))
    for _ in range(k):
        perm = rng.permutation(d)
        A[np.arange(d), perm] = rng.uniform(-1, 1, d)
    return A
