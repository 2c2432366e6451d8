"""Pieces shared by the full and partial solvers: factor pairs, row-norm
projection, the balancing regularizer, iteration traces and stopping."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np


class DivergenceError(RuntimeError):
    """Loss blew up; the step size is too large. ``trace`` holds the records so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


# called with the output shape whenever a dense U V^T is formed (allocation audit)
dense_product_hooks = []


@dataclass
class FactorPair:
    U: np.ndarray
    V: np.ndarray
    row_radius_U: float = math.inf
    row_radius_V: float = math.inf

    def __post_init__(self):
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != self.V.shape[1]:
            raise ValueError(f"incompatible factors {self.U.shape}, {self.V.shape}")

    @property
    def rank(self):
        return self.U.shape[1]

    def product(self):
        for hook in dense_product_hooks:
            hook((self.U.shape[0], self.V.shape[0]))
        return self.U @ self.V.T

    def project(self):
        return FactorPair(constraint_project(self.U, self.row_radius_U),
                          constraint_project(self.V, self.row_radius_V),
                          self.row_radius_U, self.row_radius_V)

    def is_feasible(self, rtol=1e-12):
        ru = np.linalg.norm(self.U, axis=1).max(initial=0.0)
        rv = np.linalg.norm(self.V, axis=1).max(initial=0.0)
        return (ru <= self.row_radius_U * (1 + rtol) + 1e-300
                and rv <= self.row_radius_V * (1 + rtol) + 1e-300)


def constraint_project(M, radius):
    """Rescale every row whose 2-norm exceeds ``radius`` onto the ball."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    M = np.asarray(M, dtype=float)
    norms = np.linalg.norm(M, axis=1)
    over = norms > radius
    if not over.any():
        return M.copy()
    out = M.copy()
    out[over] *= (radius / norms[over])[:, None]
    return out


def constraint_radii(U0, V0, mu):
    """Row-norm radii ``sqrt(2 mu r / d) * ||F0||_op`` for each factor."""
    d1, r = U0.shape
    d2 = V0.shape[0]
    ru = math.sqrt(2.0 * mu * r / d1) * float(np.linalg.norm(U0, 2)) if U0.size else 0.0
    rv = math.sqrt(2.0 * mu * r / d2) * float(np.linalg.norm(V0, 2)) if V0.size else 0.0
    return ru, rv


def regularizer(U, V, coef=1.0 / 8.0):
    """``coef * ||U^T U - V^T V||_F^2``."""
    D = U.T @ U - V.T @ V
    return coef * float(np.sum(D * D))


def regularizer_gradient(U, V, coef=1.0 / 8.0):
    """Gradient of :func:`regularizer`: ``4 coef U (U^T U - V^T V)`` and the V analogue."""
    D = U.T @ U - V.T @ V
    return 4.0 * coef * (U @ D), -4.0 * coef * (V @ D)


def relative_change(U_old, V_old, U_new, V_new):
    """Factor-stability ratio used as the stopping rule."""
    num = np.sum((U_new - U_old) ** 2) + np.sum((V_new - V_old) ** 2)
    den = np.sum(U_old ** 2) + np.sum(V_old ** 2)
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return float(num / den)


@dataclass
class IterationRecord:
    iter: int
    loss: float
    reg: float
    elapsed: float
    rel_change: Optional[float] = None
    distance: Optional[float] = None
    recon_error: Optional[float] = None
    rel_recon_error: Optional[float] = None


@dataclass
class IterationTrace:
    records: List[IterationRecord] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    stopped_by: str = ""
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def restart_clock(self):
        self._t0 = time.perf_counter()

    def elapsed(self):
        return time.perf_counter() - self._t0

    def append(self, rec):
        if self.records and rec.iter <= self.records[-1].iter:
            raise ValueError("trace iterations must increase")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_records(self):
        return [asdict(r) for r in self.records]

    def check_divergence(self, window=10, factor=10.0, floor=0.0):
        """Raise :class:`DivergenceError` if the loss grew ``factor``-fold in ``window`` iterations."""
        if len(self.records) <= window:
            return
        now = self.records[-1].loss
        before = self.records[-1 - window].loss
        if not math.isfinite(now) or now > factor * max(before, floor):
            raise DivergenceError(
                f"diverged; step size too large (loss {before:.3e} -> {now:.3e} "
                f"over {window} iterations)", trace=self)


def make_record(it, loss, reg, trace, U, V, ground_truth=None, rel_change=None):
    rec = IterationRecord(it, float(loss), float(reg), trace.elapsed(), rel_change)
    if ground_truth is not None:
        rec.distance = ground_truth.distance(U, V)
        rec.recon_error, rec.rel_recon_error = ground_truth.reconstruction_error(U, V)
    return rec


def log_linear_fit(y, start=None, stop=None):
    """Least-squares slope and R^2 of ``log(y)`` against index over ``[start, stop)``."""
    y = np.asarray(y, dtype=float)[start:stop]
    t = np.arange(y.size, dtype=float)
    mask = y > 0
    if mask.sum() < 3:
        return math.nan, math.nan
    t, ly = t[mask], np.log(y[mask])
    slope, intercept = np.polyfit(t, ly, 1)
    fit = slope * t + intercept
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2
