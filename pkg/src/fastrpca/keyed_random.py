"""Counter-based random numbers keyed by ``(seed, stream, i, j)``.

Every entry's draw depends only on its key, so supports and matrices are
reproducible regardless of generation order or of which block is generated.
The mixer is SplitMix64's finalizer applied to a combined 64-bit key.
"""
import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def keyed_bits(seed, stream, i, j):
    """64 pseudo-random bits per ``(i, j)`` (broadcast arrays)."""
    i = np.asarray(i, dtype=np.uint64)
    j = np.asarray(j, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(np.array([seed], dtype=np.uint64) * _GOLDEN + np.uint64(stream))
        z = _mix(base ^ (i * _GOLDEN))
        z = _mix(z + j * _GOLDEN + _GOLDEN)
    return z


def keyed_uniform(seed, stream, i, j):
    """Uniform draws in the open interval (0, 1)."""
    bits = keyed_bits(seed, stream, i, j) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * (1.0 / 2.0 ** 53)


def keyed_normal(seed, stream, i, j):
    """Standard normal draws by the Box-Muller transform on two keyed streams."""
    u1 = keyed_uniform(seed, 2 * stream, i, j)
    u2 = keyed_uniform(seed, 2 * stream + 1, i, j)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def grid(shape):
    """Index arrays ``(i, j)`` broadcasting to ``shape``."""
    return np.arange(shape[0])[:, None], np.arange(shape[1])[None, :]
