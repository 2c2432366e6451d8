"""Robust PCA from a fully observed matrix: spectral initialization after a
hard-thresholding pass, then projected gradient descent on ``(U, V)`` with
the sparse estimate refreshed every iteration."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .factors import (FactorPair, IterationTrace, constraint_radii, make_record,
                      regularizer, regularizer_gradient, relative_change)
from .linalg import SVDConvergenceError, SupportedMatrix, as_dense, factored_operator_norm, truncated_svd
from .sparse_estimator import hard_threshold

# relative tolerance for the one-off initial SVD; the iterations refine it
INIT_SVD_TOL = 1e-8
INIT_SVD_SWEEPS = 300

# largest constant covered by the convergence theory; far slower in practice
THEORY_ETA_C = 1.0 / 36.0
# practical default, eta = 1 / (2 sigma_1)
DEFAULT_ETA_C = 0.5


@dataclass(frozen=True)
class FullSolverConfig:
    rank: int
    alpha: float
    gamma: float = 2.0
    eta: Optional[float] = None
    eta_c: float = DEFAULT_ETA_C
    max_iters: int = 500
    mu: float = 5.0
    stop_tol: float = 4e-4
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.gamma < 1.0:
            raise ValueError("gamma must be >= 1")
        if self.gamma * self.alpha >= 1.0:
            raise ValueError("gamma * alpha must be < 1")
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if self.mu < 1.0:
            raise ValueError("mu must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be nonnegative")


@dataclass
class FullSolverState:
    factors: FactorPair
    sparse: SupportedMatrix
    iter: int
    trace: IterationTrace
    eta: float
    residual: np.ndarray  # Y - U V^T for the current factors
    ground_truth: object = None
    converged: bool = False


def loss_full(U, V, S, Y):
    """``0.5 * ||U V^T + S - Y||_F^2``."""
    E = U @ V.T - Y
    if isinstance(S, SupportedMatrix):
        E[S.rows, S.cols] += S.values
    else:
        E += S
    return 0.5 * float(np.sum(E * E))


def gradient_full(U, V, S, Y):
    """Gradients of :func:`loss_full` with respect to ``U`` and ``V``."""
    E = U @ V.T - Y
    if isinstance(S, SupportedMatrix):
        E[S.rows, S.cols] += S.values
    else:
        E += S
    return E @ V, E.T @ U


def _residual_with_sparse(R, S):
    # U V^T + S - Y == S - R
    E = -R
    E[S.rows, S.cols] += S.values
    return E


def _initial_svd(A, r, seed, trace):
    try:
        return truncated_svd(A, r, tol=INIT_SVD_TOL, max_sweeps=INIT_SVD_SWEEPS, seed=seed)
    except SVDConvergenceError as err:
        trace.warnings.append(f"initial SVD stopped early (relative residual {err.residual:.2e})")
        return err.result


def factors_from_triple(trip, mu, trace):
    root = np.sqrt(trip.sigma)
    U0, V0 = trip.L * root, trip.R * root
    if trip.sigma[-1] == 0:
        trace.warnings.append("rank-deficient initialization: sigma_r = 0")
    ru, rv = constraint_radii(U0, V0, mu)
    return FactorPair(U0, V0, ru, rv).project()


def initialize_full(Y, cfg, ground_truth=None):
    """Phase I: threshold ``Y``, take the rank-``r`` SVD of the remainder,
    split it into balanced factors and project them onto their row-norm sets
    (radii frozen from the unprojected factors)."""
    Y = as_dense(Y)
    if Y.size == 0:
        raise ValueError("empty input matrix")
    if cfg.rank > min(Y.shape):
        raise ValueError(f"rank {cfg.rank} exceeds min(shape) = {min(Y.shape)}")
    trace = IterationTrace()
    S = hard_threshold(Y, cfg.alpha)
    A = Y.copy()
    A[S.rows, S.cols] -= S.values
    trip = _initial_svd(A, cfg.rank, cfg.seed, trace)
    factors = factors_from_triple(trip, cfg.mu, trace)
    if cfg.eta is not None:
        eta = cfg.eta
    else:
        s1 = factored_operator_norm(factors.U, factors.V)
        eta = cfg.eta_c / s1 if s1 > 0 else 0.0
    R = Y - factors.product()
    loss = 0.5 * float(np.sum(_residual_with_sparse(R, S) ** 2))
    trace.append(make_record(0, loss, regularizer(factors.U, factors.V), trace,
                             factors.U, factors.V, ground_truth))
    return FullSolverState(factors, S, 0, trace, eta, R, ground_truth)


def step_full(state, Y, cfg):
    """One iteration: refresh the sparse estimate at fraction ``gamma * alpha``,
    then a projected gradient step on both factors."""
    U, V = state.factors.U, state.factors.V
    S = hard_threshold(state.residual, cfg.gamma * cfg.alpha)
    E = _residual_with_sparse(state.residual, S)
    gu, gv = E @ V, E.T @ U
    ru, rv = regularizer_gradient(U, V)
    new = replace(state.factors, U=U - state.eta * (gu + ru), V=V - state.eta * (gv + rv)).project()
    R = Y - new.product()
    loss = 0.5 * float(np.sum(_residual_with_sparse(R, S) ** 2))
    change = relative_change(U, V, new.U, new.V)
    it = state.iter + 1
    state.trace.append(make_record(it, loss, regularizer(new.U, new.V), state.trace,
                                   new.U, new.V, state.ground_truth, change))
    state.trace.check_divergence(floor=1e-30 * max(float(np.sum(Y * Y)), 1e-300))
    return replace(state, factors=new, sparse=S, iter=it, residual=R,
                   converged=change <= cfg.stop_tol)


def solve_full(Y, cfg, ground_truth=None):
    """Run the full-observation solver.

    Parameters
    ----------
    Y : array_like, shape (d1, d2)
    cfg : FullSolverConfig
    ground_truth : GroundTruth, optional
        When given, every trace record carries the factor distance and the
        reconstruction error.

    Returns
    -------
    factors : FactorPair
    sparse : SupportedMatrix
    trace : IterationTrace
    """
    Y = as_dense(Y)
    state = initialize_full(Y, cfg, ground_truth)
    while state.iter < cfg.max_iters:
        state = step_full(state, Y, cfg)
        if state.converged:
            state.trace.stopped_by = "stop_tol"
            break
    else:
        state.trace.stopped_by = "max_iters"
    return state.factors, state.sparse, state.trace
