"""Matrix file formats and experiment-config parsing.

Formats
-------
CSV   headerless text, one matrix row per line, full-precision decimals
      (17 significant digits, so every float64 round-trips exactly).
KMX1  binary single matrix: magic b"KMX1", two u32 little-endian
      (rows, cols), then rows*cols f64 little-endian, row-major.
KST1  binary matrix stack: magic b"KST1", three u32 little-endian
      (count, rows, cols), then count matrices, each row-major f64.

All loaders validate that every entry is finite.
"""

import os
import struct

import numpy as np

from .errors import ConfigError, DimensionError

MAGIC_KMX = b"KMX1"
MAGIC_KST = b"KST1"

_HEADER_KMX = struct.Struct("<4sII")
_HEADER_KST = struct.Struct("<4sIII")

FLOAT_FMT = "{:.17g}"


def format_float(x):
    """Serialize one float at 17 significant digits (lossless)."""
    return FLOAT_FMT.format(float(x))


def _check_finite(a, path):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{path}: file contains non-finite entries")
    return a


def write_csv_matrix(path, m):
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    with open(path, "w", encoding="utf-8") as fh:
        for row in m:
            fh.write(",".join(format_float(x) for x in row))
            fh.write("\n")


def read_csv_matrix(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad number ({exc})") from exc
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    width = len(rows[0])
    for i, r in enumerate(rows, start=1):
        if len(r) != width:
            raise DimensionError(f"{path}:{i}: row has {len(r)} fields, expected {width}")
    return _check_finite(np.asarray(rows, dtype=np.float64), path)


def write_kmx(path, m):
    m = np.ascontiguousarray(np.atleast_2d(m), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER_KMX.pack(MAGIC_KMX, m.shape[0], m.shape[1]))
        fh.write(m.tobytes(order="C"))


def read_kmx(path):
    with open(path, "rb") as fh:
        header = fh.read(_HEADER_KMX.size)
        if len(header) < _HEADER_KMX.size:
            raise ValueError(f"{path}: truncated KMX header")
        magic, rows, cols = _HEADER_KMX.unpack(header)
        if magic != MAGIC_KMX:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC_KMX!r}")
        data = np.fromfile(fh, dtype="<f8", count=rows * cols)
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated KMX payload")
    return _check_finite(data.reshape(rows, cols).astype(np.float64, copy=False), path)


class KstWriter:
    """Streaming writer for a KST1 matrix stack with a known count."""

    def __init__(self, path, count, rows, cols):
        self.path = path
        self.count = int(count)
        self.rows = int(rows)
        self.cols = int(cols)
        self._written = 0
        self._fh = open(path, "wb")
        self._fh.write(_HEADER_KST.pack(MAGIC_KST, self.count, self.rows, self.cols))

    def append(self, stack):
        """Append a block of matrices shaped (m, rows, cols)."""
        stack = np.ascontiguousarray(stack, dtype="<f8")
        if stack.ndim == 2:
            stack = stack[None]
        if stack.shape[1:] != (self.rows, self.cols):
            raise DimensionError(
                f"{self.path}: block shape {stack.shape[1:]} != ({self.rows}, {self.cols})"
            )
        self._fh.write(stack.tobytes(order="C"))
        self._written += stack.shape[0]

    def close(self):
        self._fh.close()
        if self._written != self.count:
            raise ValueError(
                f"{self.path}: wrote {self._written} matrices, header promised {self.count}"
            )

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
        return False


def kst_header(path):
    with open(path, "rb") as fh:
        header = fh.read(_HEADER_KST.size)
    if len(header) < _HEADER_KST.size:
        raise ValueError(f"{path}: truncated KST header")
    magic, count, rows, cols = _HEADER_KST.unpack(header)
    if magic != MAGIC_KST:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC_KST!r}")
    return count, rows, cols


def iter_kst(path, chunk=64):
    """Yield (start_index, block) pairs of shape (m, rows, cols) covering
    the stack in order; validates finiteness per block."""
    count, rows, cols = kst_header(path)
    per = rows * cols
    with open(path, "rb") as fh:
        fh.seek(_HEADER_KST.size)
        start = 0
        while start < count:
            m = min(chunk, count - start)
            data = np.fromfile(fh, dtype="<f8", count=m * per)
            if data.size != m * per:
                raise ValueError(f"{path}: truncated KST payload at matrix {start}")
            yield start, _check_finite(
                data.reshape(m, rows, cols).astype(np.float64, copy=False), path
            )
            start += m


def read_kst(path):
    """Materialize a whole KST stack as an (n, rows, cols) array."""
    count, rows, cols = kst_header(path)
    blocks = [b for _, b in iter_kst(path, chunk=max(1, count))]
    return np.concatenate(blocks, axis=0) if blocks else np.empty((0, rows, cols))


def sniff_format(path):
    """Classify a matrix file as 'csv', 'kmx', or 'kst' by magic bytes,
    falling back to text."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC_KMX:
        return "kmx"
    if head == MAGIC_KST:
        return "kst"
    return "csv"


def read_matrix(path):
    """Load a single matrix from CSV or KMX."""
    kind = sniff_format(path)
    if kind == "kmx":
        return read_kmx(path)
    if kind == "kst":
        raise ValueError(f"{path}: is a matrix stack; expected a single matrix")
    return read_csv_matrix(path)


def write_matrix(path, m, fmt=None):
    if fmt is None:
        fmt = "kmx" if str(path).endswith(".kmx") else "csv"
    if fmt == "kmx":
        write_kmx(path, m)
    else:
        write_csv_matrix(path, m)


# ---------------------------------------------------------------------------
# Flat key-value experiment configs


def parse_config_text(text, source="<config>"):
    """Parse 'key = value' lines; '#' starts a comment.  Returns an
    ordered dict of raw string values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))
