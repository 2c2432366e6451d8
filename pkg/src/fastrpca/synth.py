"""Synthetic instances: Gaussian low-rank part plus uniformly valued
Bernoulli-supported corruptions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .keyed_random import grid, keyed_normal, keyed_uniform
from .linalg import SupportedMatrix
from .partial import ObservedInstance, sample_support
from .metrics import GroundTruth

# keyed-RNG stream ids
_STREAM_A, _STREAM_B = 1, 2
_STREAM_SUPPORT, _STREAM_VALUE = 10, 11


@dataclass(frozen=True)
class SynthSpec:
    d1: int
    r: int
    alpha: float = 0.1
    seed: int = 0
    d2: Optional[int] = None
    corruption_scale: Optional[float] = None

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.r > min(self.shape):
            raise ValueError("r exceeds min(d1, d2)")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")

    @property
    def shape(self):
        return (self.d1, self.d2 if self.d2 is not None else self.d1)

    @property
    def scale(self):
        if self.corruption_scale is not None:
            return self.corruption_scale
        return 5.0 * self.r / max(self.shape)


def generate_factors(spec):
    """Raw Gaussian factors ``A, B`` with i.i.d. N(0, 1/d) entries."""
    d1, d2 = spec.shape
    d = max(d1, d2)
    cols = np.arange(spec.r)[None, :]
    A = keyed_normal(spec.seed, _STREAM_A, np.arange(d1)[:, None], cols) / np.sqrt(d)
    B = keyed_normal(spec.seed, _STREAM_B, np.arange(d2)[:, None], cols) / np.sqrt(d)
    return A, B


def generate_low_rank(spec):
    """``(M*, U*, V*)`` with ``M* = A B^T`` and balanced factors of ``M*``."""
    A, B = generate_factors(spec)
    gt = GroundTruth.from_factors(A, B)
    return A @ B.T, gt.U_star, gt.V_star


def ground_truth(spec, with_matrix=False):
    A, B = generate_factors(spec)
    gt = GroundTruth.from_factors(A, B)
    if with_matrix:
        gt.M = A @ B.T
    return gt


def generate_corruption(spec):
    """Each entry nonzero with probability ``alpha``, values uniform on ``[-c, c]``."""
    shape = spec.shape
    if spec.alpha == 0:
        return SupportedMatrix.empty(shape)
    i, j = grid(shape)
    hit = keyed_uniform(spec.seed, _STREAM_SUPPORT, i, j) < spec.alpha
    rows, cols = np.nonzero(hit)
    u = keyed_uniform(spec.seed, _STREAM_VALUE, rows, cols)
    return SupportedMatrix(shape, rows, cols, spec.scale * (2.0 * u - 1.0))


def generate_instance(spec):
    """Observed ``Y = M* + S*`` together with ``M*`` and ``S*``."""
    M, _, _ = generate_low_rank(spec)
    S = generate_corruption(spec)
    Y = M.copy()
    Y[S.rows, S.cols] += S.values
    return Y, M, S


def observe(spec, p, sample_seed=None):
    """Bernoulli(p) observation of ``generate_instance(spec)[0]``, built entry by
    entry on the sampled support so no dense matrix is formed.

    Same support as ``bernoulli_sample(Y, p, sample_seed)``; values agree to rounding.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    seed = spec.seed if sample_seed is None else sample_seed
    rows, cols = sample_support(spec.shape, p, seed)
    A, B = generate_factors(spec)
    vals = np.einsum("ij,ij->i", A[rows], B[cols])
    if spec.alpha > 0:
        hit = keyed_uniform(spec.seed, _STREAM_SUPPORT, rows, cols) < spec.alpha
        u = keyed_uniform(spec.seed, _STREAM_VALUE, rows[hit], cols[hit])
        vals[hit] += spec.scale * (2.0 * u - 1.0)
    return ObservedInstance(SupportedMatrix(spec.shape, rows, cols, vals))


def moving_box_sequence(n_frames=10, height=40, width=40, box=6, step=3, seed=0):
    """Static textured background with a bright box moving diagonally.

    Returns ``(frames, background)``: frames stacked column-major as a
    ``(height * width) x n_frames`` matrix and the background column, both
    already quantized to the 8-bit grid so that a PGM round trip is exact.
    """
    rng = np.random.default_rng(seed)
    bg = np.rint((0.3 + 0.4 * rng.random((height, width))) * 255) / 255
    cols = []
    for t in range(n_frames):
        f = bg.copy()
        top, left = 2 + step * t, 3 + step * t
        f[top:top + box, left:left + box] = 1.0
        cols.append(f.ravel(order="F"))
    return np.column_stack(cols), bg.ravel(order="F")
