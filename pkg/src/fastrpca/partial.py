"""Robust PCA from a Bernoulli-sampled subset of entries.

Everything after sampling touches only the observed coordinates: residuals
are evaluated per observed entry and the dense ``d1 x d2`` product of the
factors is never formed.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .factors import (FactorPair, IterationTrace, make_record, regularizer,
                      regularizer_gradient, relative_change)
from .full import FullSolverConfig, FullSolverState, _initial_svd, factors_from_triple
from .keyed_random import keyed_uniform
from .linalg import SupportedMatrix, as_dense
from .sparse_estimator import support_keep_mask

PARTIAL_REG_COEF = 1.0 / 64.0
_STREAM_SAMPLE = 20


@dataclass(frozen=True)
class PartialSolverConfig(FullSolverConfig):
    gamma: float = 3.0
    p: Optional[float] = None
    # eta = eta_c / (mu r sigma_1) when true, eta_c / sigma_1 otherwise
    scale_eta_by_mu_r: bool = True

    def __post_init__(self):
        super().__post_init__()
        if self.p is not None:
            if not 0.0 < self.p <= 1.0:
                raise ValueError("p must lie in (0, 1]")
            self.check_rate(self.p)

    def check_rate(self, p):
        if self.gamma * p * self.alpha >= 1.0:
            raise ValueError("gamma * p * alpha must be < 1")


@dataclass(frozen=True)
class ObservedInstance:
    """Values of ``Y`` on the revealed support."""

    observed: SupportedMatrix

    @property
    def shape(self):
        return self.observed.shape

    @property
    def d1(self):
        return self.observed.shape[0]

    @property
    def d2(self):
        return self.observed.shape[1]

    def linear_index(self):
        return self.observed.rows * self.d2 + self.observed.cols


@dataclass
class OpCounter:
    """Tally of multiply-adds spent inside the partial solver."""

    support_ops: int = 0     # work proportional to |support| * r
    factor_ops: int = 0      # work proportional to (d1 + d2) * r^2
    sort_ops: int = 0        # entries passed through the sparse estimator
    steps: int = 0

    def reset(self):
        self.support_ops = self.factor_ops = self.sort_ops = self.steps = 0


counter = OpCounter()


def bernoulli_sample(M, p, seed=0):
    """Reveal each entry of dense ``M`` independently with probability ``p``."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    M = as_dense(M)
    i = np.arange(M.shape[0])[:, None]
    j = np.arange(M.shape[1])[None, :]
    mask = keyed_uniform(seed, _STREAM_SAMPLE, i, j) < p
    return ObservedInstance(SupportedMatrix.from_dense(M, mask=mask))


def sample_support(shape, p, seed=0, block_rows=512):
    """Coordinates revealed by :func:`bernoulli_sample` without a dense matrix."""
    d1, d2 = shape
    rows, cols = [], []
    j = np.arange(d2)[None, :]
    for start in range(0, d1, block_rows):
        i = np.arange(start, min(d1, start + block_rows))[:, None]
        rr, cc = np.nonzero(keyed_uniform(seed, _STREAM_SAMPLE, i, j) < p)
        rows.append(rr + start)
        cols.append(cc)
    return np.concatenate(rows), np.concatenate(cols)


def estimate_rate(inst):
    d1, d2 = inst.shape
    if d1 * d2 == 0:
        raise ValueError("empty dimensions")
    return inst.observed.nnz / (d1 * d2)


def _entries_of_product(U, V, obs):
    """``(U V^T)[i, j]`` for every stored ``(i, j)`` of row-major ``obs``."""
    counter.support_ops += obs.nnz * U.shape[1]
    # rows are grouped, so repeating U's rows beats a gather
    return np.einsum("ij,ij->i", np.repeat(U, np.diff(obs.row_ptr), axis=0),
                     V.take(obs.cols, axis=0))


def _aligned_sparse(S, inst):
    """Values of ``S`` laid out on the observed support; raises if ``S`` escapes it."""
    out = np.zeros(inst.observed.nnz)
    if S is None or (isinstance(S, SupportedMatrix) and S.nnz == 0):
        return out
    if not isinstance(S, SupportedMatrix):
        S = SupportedMatrix.from_dense(S)
    phi = inst.linear_index()
    lin = S.rows * inst.d2 + S.cols
    pos = np.searchsorted(phi, lin)
    bad = (pos >= phi.size) | (phi[np.minimum(pos, phi.size - 1)] != lin)
    if bad.any():
        raise ValueError("sparse estimate has entries outside the observed support")
    out[pos] = S.values
    return out


def _support_matrix(inst, values):
    obs = inst.observed
    return sp.csr_matrix((values, obs.cols, obs.row_ptr), shape=obs.shape)


def loss_partial(U, V, S, inst, p):
    """``1/(2p) * ||P_obs(U V^T + S - Y)||_F^2``, touching only observed entries."""
    obs = inst.observed
    e = _entries_of_product(U, V, obs) + _aligned_sparse(S, inst) - obs.values
    return float(e @ e) / (2.0 * p)


def gradient_partial(U, V, S, inst, p):
    """Gradients of :func:`loss_partial`; ``O(|support| r)``."""
    obs = inst.observed
    e = _entries_of_product(U, V, obs) + _aligned_sparse(S, inst) - obs.values
    E = _support_matrix(inst, e / p)
    counter.support_ops += 2 * obs.nnz * U.shape[1]
    return E @ V, E.T @ U


def _resolve_rate(inst, cfg):
    p = cfg.p if cfg.p is not None else estimate_rate(inst)
    if p <= 0:
        raise ValueError("observed support is empty")
    cfg.check_rate(p)
    return p


@dataclass
class PartialSolverState(FullSolverState):
    p: float = 1.0
    sparse_values: np.ndarray = field(default=None, repr=False)  # S laid out on the support


def initialize_partial(inst, cfg, ground_truth=None):
    """Threshold the observed entries at fraction ``2 p alpha``, take the
    rank-``r`` SVD of the rescaled remainder and build projected factors."""
    obs = inst.observed
    if obs.nnz == 0:
        raise ValueError("observed support is empty")
    if cfg.rank > min(inst.shape):
        raise ValueError(f"rank {cfg.rank} exceeds min(shape) = {min(inst.shape)}")
    p = _resolve_rate(inst, cfg)
    trace = IterationTrace()
    keep = support_keep_mask(obs, 2.0 * p * cfg.alpha)
    counter.sort_ops += obs.nnz
    s_vals = np.where(keep, obs.values, 0.0)
    A = _support_matrix(inst, (obs.values - s_vals) / p)
    trip = _initial_svd(A, cfg.rank, cfg.seed, trace)
    factors = factors_from_triple(trip, cfg.mu, trace)
    if cfg.eta is not None:
        eta = cfg.eta
    else:
        s1 = float(np.linalg.norm(np.linalg.qr(factors.U)[1] @ np.linalg.qr(factors.V)[1].T, 2))
        scale = cfg.mu * cfg.rank if cfg.scale_eta_by_mu_r else 1.0
        eta = cfg.eta_c / (scale * s1) if s1 > 0 else 0.0
    res = obs.values - _entries_of_product(factors.U, factors.V, obs)
    loss = float(np.sum((s_vals - res) ** 2)) / (2.0 * p)
    trace.append(make_record(0, loss, regularizer(factors.U, factors.V, PARTIAL_REG_COEF),
                             trace, factors.U, factors.V, ground_truth))
    return PartialSolverState(factors, obs.select(keep), 0, trace, eta, res, ground_truth,
                              p=p, sparse_values=s_vals)


def step_partial(state, inst, cfg):
    """Refresh the sparse estimate on the support at fraction ``gamma p alpha``,
    then one projected gradient step (regularizer weight 1/64)."""
    obs = inst.observed
    U, V = state.factors.U, state.factors.V
    p, r = state.p, U.shape[1]
    keep = support_keep_mask(obs.with_values(state.residual), cfg.gamma * p * cfg.alpha)
    counter.sort_ops += obs.nnz
    s_vals = np.where(keep, state.residual, 0.0)
    E = _support_matrix(inst, (s_vals - state.residual) / p)
    gu, gv = E @ V, E.T @ U
    ru, rv = regularizer_gradient(U, V, PARTIAL_REG_COEF)
    counter.support_ops += 2 * obs.nnz * r
    counter.factor_ops += 4 * (U.shape[0] + V.shape[0]) * r * r
    counter.steps += 1
    new = replace(state.factors, U=U - state.eta * (gu + ru), V=V - state.eta * (gv + rv)).project()
    res = obs.values - _entries_of_product(new.U, new.V, obs)
    loss = float(np.sum((s_vals - res) ** 2)) / (2.0 * p)
    change = relative_change(U, V, new.U, new.V)
    it = state.iter + 1
    state.trace.append(make_record(it, loss, regularizer(new.U, new.V, PARTIAL_REG_COEF),
                                   state.trace, new.U, new.V, state.ground_truth, change))
    state.trace.check_divergence(floor=1e-30 * max(float(obs.values @ obs.values), 1e-300))
    return replace(state, factors=new, sparse=obs.with_values(s_vals).select(keep), iter=it, residual=res,
                   sparse_values=s_vals, converged=change <= cfg.stop_tol)


def solve_partial(inst, cfg, ground_truth=None):
    """Run the partial-observation solver; returns ``(factors, sparse, trace)``."""
    state = initialize_partial(inst, cfg, ground_truth)
    while state.iter < cfg.max_iters:
        state = step_partial(state, inst, cfg)
        if state.converged:
            state.trace.stopped_by = "stop_tol"
            break
    else:
        state.trace.stopped_by = "max_iters"
    return state.factors, state.sparse, state.trace
