"""Matrix and frame file formats.

* CSV: dense, one row per line, 17 significant digits.
* Matrix Market: ``coordinate`` (sparse, read as an observed instance) and
  ``array`` (dense, column-major), real general only.
* raw-binary: ``b"RPCA"``, u32 version, u64 rows, u64 cols, then float64
  little-endian row-major.
* PGM P5 frames with maxval <= 255.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import SupportedMatrix, as_dense
from .partial import ObservedInstance

FORMATS = ("matrix-market", "csv", "raw-binary")
_EXT = {".mtx": "matrix-market", ".csv": "csv", ".bin": "raw-binary", ".rpca": "raw-binary"}
_MAGIC = b"RPCA"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class ParseError(ValueError):
    """Malformed matrix or frame file."""

    def __init__(self, path, line, message):
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


class HeaderError(ParseError):
    pass


class DimensionError(ParseError):
    pass


class DuplicateEntryError(ParseError):
    pass


def _fmt(x):
    return "%.17g" % x


def infer_format(path, fmt=None):
    if fmt:
        if fmt not in FORMATS:
            raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
        return fmt
    ext = Path(path).suffix.lower()
    if ext not in _EXT:
        raise ValueError(f"cannot infer format from {path!r}; pass --format")
    return _EXT[ext]


# -- readers ---------------------------------------------------------------

def read_matrix(path, fmt=None):
    """Read a matrix file.

    Returns an ``ndarray`` for CSV, raw-binary and Matrix Market ``array``
    files, and an :class:`ObservedInstance` for Matrix Market ``coordinate``
    files (the listed entries are the observed support).
    """
    fmt = infer_format(path, fmt)
    if fmt == "csv":
        return _read_csv(path)
    if fmt == "raw-binary":
        return _read_binary(path)
    return _read_mm(path)


def _read_csv(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError:
                raise ParseError(path, lineno, "non-numeric field") from None
            if len(rows[-1]) != len(rows[0]):
                raise DimensionError(path, lineno,
                                     f"expected {len(rows[0])} fields, got {len(rows[-1])}")
    if not rows:
        raise DimensionError(path, 0, "empty file")
    try:
        return as_dense(rows)
    except ValueError as err:
        raise ParseError(path, 0, str(err)) from None


def _read_binary(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise HeaderError(path, 0, "file shorter than header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise HeaderError(path, 0, f"bad magic {magic!r}")
    if version != _VERSION:
        raise HeaderError(path, 0, f"unsupported version {version}")
    payload = data[_HEADER.size:]
    if len(payload) != 8 * rows * cols:
        raise DimensionError(path, 0, f"payload holds {len(payload)} bytes, need {8 * rows * cols}")
    arr = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise ParseError(path, 0, "non-finite values")
    return arr


def _data_lines(fh, start):
    for lineno, line in enumerate(fh, start):
        s = line.strip()
        if s and not s.startswith("%"):
            yield lineno, s


def _read_mm(path):
    with open(path) as fh:
        header = fh.readline()
        parts = header.strip().split()
        if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
            raise HeaderError(path, 1, "missing '%%MatrixMarket matrix' header")
        layout, field, symmetry = (x.lower() for x in parts[2:])
        if layout not in ("coordinate", "array"):
            raise HeaderError(path, 1, f"unknown layout {layout!r}")
        if field not in ("real", "integer", "double"):
            raise HeaderError(path, 1, f"unsupported field {field!r}")
        if symmetry != "general":
            raise HeaderError(path, 1, f"unsupported symmetry {symmetry!r}")
        lines = _data_lines(fh, 2)
        try:
            lineno, size = next(lines)
        except StopIteration:
            raise HeaderError(path, 2, "missing size line") from None
        try:
            dims = [int(x) for x in size.split()]
        except ValueError:
            raise HeaderError(path, lineno, "size line must be integers") from None
        if layout == "coordinate":
            return _read_mm_coordinate(path, lines, lineno, dims)
        return _read_mm_array(path, lines, lineno, dims)


def _read_mm_coordinate(path, lines, size_line, dims):
    if len(dims) != 3 or min(dims) < 0:
        raise HeaderError(path, size_line, "coordinate size line needs 'rows cols nnz'")
    d1, d2, nnz = dims
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    seen = {}
    count = 0
    for lineno, s in lines:
        if count == nnz:
            raise DimensionError(path, lineno, f"more than {nnz} entries")
        fields = s.split()
        if len(fields) != 3:
            raise ParseError(path, lineno, "entry needs 'row col value'")
        try:
            i, j, v = int(fields[0]) - 1, int(fields[1]) - 1, float(fields[2])
        except ValueError:
            raise ParseError(path, lineno, "malformed entry") from None
        if not (0 <= i < d1 and 0 <= j < d2):
            raise DimensionError(path, lineno, f"entry ({i + 1}, {j + 1}) outside {d1}x{d2}")
        if not np.isfinite(v):
            raise ParseError(path, lineno, "non-finite value")
        if (i, j) in seen:
            raise DuplicateEntryError(path, lineno,
                                      f"duplicate entry ({i + 1}, {j + 1}), first on line {seen[(i, j)]}")
        seen[(i, j)] = lineno
        rows[count], cols[count], vals[count] = i, j, v
        count += 1
    if count != nnz:
        raise DimensionError(path, 0, f"expected {nnz} entries, found {count}")
    return ObservedInstance(SupportedMatrix((d1, d2), rows, cols, vals))


def _read_mm_array(path, lines, size_line, dims):
    if len(dims) != 2 or min(dims) < 0:
        raise HeaderError(path, size_line, "array size line needs 'rows cols'")
    d1, d2 = dims
    vals = []
    for lineno, s in lines:
        if len(vals) == d1 * d2:
            raise DimensionError(path, lineno, f"more than {d1 * d2} values")
        try:
            vals.append(float(s))
        except ValueError:
            raise ParseError(path, lineno, "malformed value") from None
    if len(vals) != d1 * d2:
        raise DimensionError(path, 0, f"expected {d1 * d2} values, found {len(vals)}")
    arr = np.array(vals).reshape((d1, d2), order="F")
    if not np.all(np.isfinite(arr)):
        raise ParseError(path, 0, "non-finite values")
    return arr


# -- writers ---------------------------------------------------------------

def write_matrix(obj, path, fmt=None):
    """Write a dense array, :class:`SupportedMatrix` or :class:`ObservedInstance`.

    Sparse inputs go to Matrix Market coordinate regardless of ``fmt``
    unless ``fmt`` asks for a dense layout, in which case they are densified.
    """
    fmt = infer_format(path, fmt)
    if isinstance(obj, ObservedInstance):
        obj = obj.observed
    try:
        if isinstance(obj, SupportedMatrix):
            if fmt == "matrix-market":
                _write_mm_coordinate(obj, path)
                return
            obj = obj.to_dense()
        arr = as_dense(obj)
        if fmt == "csv":
            _write_csv(arr, path)
        elif fmt == "raw-binary":
            _write_binary(arr, path)
        else:
            _write_mm_array(arr, path)
    except OSError as err:
        raise OSError(err.errno, f"cannot write {path}: {err.strerror}") from err


def _write_csv(arr, path):
    with open(path, "w", newline="\n") as fh:
        for row in arr:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_binary(arr, path):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, arr.shape[0], arr.shape[1]))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _write_mm_coordinate(S, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{S.shape[0]} {S.shape[1]} {S.nnz}\n")
        for i, j, v in zip(S.rows.tolist(), S.cols.tolist(), S.values.tolist()):
            fh.write(f"{i + 1} {j + 1} {_fmt(v)}\n")


def _write_mm_array(arr, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{arr.shape[0]} {arr.shape[1]}\n")
        for v in arr.ravel(order="F").tolist():
            fh.write(_fmt(v) + "\n")


def write_factors(factors, directory, fmt="csv"):
    """Write ``U`` and ``V`` as ``U.<ext>`` / ``V.<ext>`` in ``directory``."""
    ext = {"csv": ".csv", "raw-binary": ".bin", "matrix-market": ".mtx"}[fmt]
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = directory / f"U{ext}", directory / f"V{ext}"
    write_matrix(factors.U, paths[0], fmt)
    write_matrix(factors.V, paths[1], fmt)
    return paths


def read_factors(directory, fmt="csv"):
    ext = {"csv": ".csv", "raw-binary": ".bin", "matrix-market": ".mtx"}[fmt]
    directory = Path(directory)
    return read_matrix(directory / f"U{ext}", fmt), read_matrix(directory / f"V{ext}", fmt)


# -- frames ----------------------------------------------------------------

@dataclass
class FrameStack:
    """Frames vectorized column-major and stacked as columns."""

    height: int
    width: int
    matrix: np.ndarray          # (height * width) x n, values in [0, 1]
    names: list
    maxval: int = 255

    @property
    def n_frames(self):
        return self.matrix.shape[1]

    def frame(self, j):
        return self.matrix[:, j].reshape((self.height, self.width), order="F")


def _pgm_tokens(data, count, path):
    # header tokens of a P5 file, skipping '#' comments; returns tokens and raster offset
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise HeaderError(path, 0, "truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path):
    """Read a binary PGM (P5) image as a ``uint8`` array plus its maxval."""
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data, 4, path)
    if tokens[0] != b"P5":
        raise HeaderError(path, 0, "not a binary PGM (P5) file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise HeaderError(path, 0, "non-integer PGM header field") from None
    if not 0 < maxval < 256:
        raise HeaderError(path, 0, f"unsupported maxval {maxval}")
    raster = data[offset:offset + width * height]
    if len(raster) != width * height:
        raise DimensionError(path, 0, "truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width), maxval


def write_pgm(path, image):
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(image.tobytes())


def read_frames(directory):
    """Load every ``*.pgm`` in ``directory`` (sorted by name) into a :class:`FrameStack`."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.is_file())
    if not files:
        raise ValueError(f"no frames in {directory}")
    cols, shape, maxval = [], None, None
    for f in files:
        if f.suffix.lower() != ".pgm":
            raise ParseError(f, 0, "not a .pgm file")
        img, mv = read_pgm(f)
        if shape is None:
            shape, maxval = img.shape, mv
        elif img.shape != shape:
            raise DimensionError(f, 0, f"frame is {img.shape}, expected {shape}")
        cols.append(img.astype(np.float64).ravel(order="F") / mv)
    return FrameStack(shape[0], shape[1], np.column_stack(cols), [f.name for f in files], maxval)


def quantize(column):
    return np.rint(np.clip(column, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_frame(directory, name, column, height, width):
    img = quantize(column).reshape((height, width), order="F")
    write_pgm(Path(directory) / name, img)


def write_frames(matrix, height, width, directory, names=None):
    """Write each column of ``matrix`` as a PGM frame (clamped to [0, 1])."""
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    matrix = np.asarray(matrix)
    names = names or [f"frame_{j:04d}.pgm" for j in range(matrix.shape[1])]
    for j, name in enumerate(names):
        write_frame(directory, name, matrix[:, j], height, width)
    return names
