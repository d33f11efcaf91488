"""File formats: MatrixMarket (.mtx) for sparse, CSV and the raw HDMAT1
binary for dense, and 8-bit grayscale PGM (P2/P5) for images.

HDMAT1 layout: magic ``HDMAT1`` (6 bytes), u64 rows, u64 cols (little
endian), then rows*cols float64 values in column-major order.

PGM pixels are mapped to [0, 1] on read; writing clamps to [0, 1] and
quantizes to 8 bits.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

__all__ = [
    "read_hdmat",
    "write_hdmat",
    "read_csv",
    "write_csv",
    "read_mtx",
    "write_mtx",
    "read_pgm",
    "write_pgm",
    "load_matrix",
]

HDMAT_MAGIC = b"HDMAT1"


class MatrixIOError(Exception):
    """Unreadable or malformed matrix file."""


def write_hdmat(path, X: np.ndarray) -> None:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("write_hdmat expects a 2-D array")
    with open(path, "wb") as f:
        f.write(HDMAT_MAGIC)
        f.write(struct.pack("<QQ", X.shape[0], X.shape[1]))
        f.write(np.asfortranarray(X).tobytes(order="F"))


def read_hdmat(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(6)
        if magic != HDMAT_MAGIC:
            raise MatrixIOError(f"{path}: bad magic {magic!r}, expected {HDMAT_MAGIC!r}")
        rows, cols = struct.unpack("<QQ", f.read(16))
        payload = f.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise MatrixIOError(f"{path}: truncated payload")
    data = np.frombuffer(payload, dtype="<f8")
    return np.reshape(data, (rows, cols), order="F").copy()


def write_csv(path, X: np.ndarray) -> None:
    np.savetxt(path, np.asarray(X, dtype=np.float64), delimiter=",", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    try:
        X = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise MatrixIOError(f"{path}: not a numeric CSV matrix ({exc})") from exc
    return X


def write_mtx(path, X) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(X))


def read_mtx(path) -> sp.csr_matrix:
    try:
        X = scipy.io.mmread(str(path))
    except Exception as exc:
        raise MatrixIOError(f"{path}: not a MatrixMarket file ({exc})") from exc
    X = sp.csr_matrix(X, dtype=np.float64)
    X.sum_duplicates()
    X.eliminate_zeros()
    X.sort_indices()
    return X


def _pgm_tokens(data: bytes):
    # header token stream, skipping '#' comments
    i = 0
    while i < len(data):
        c = data[i : i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            j = data.find(b"\n", i)
            i = len(data) if j < 0 else j + 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path) -> np.ndarray:
    """Grayscale PGM (P2 ascii or P5 binary) as float64 in [0, 1]."""
    raw = Path(path).read_bytes()
    tokens = _pgm_tokens(raw)
    try:
        magic, _ = next(tokens)
        if magic not in (b"P2", b"P5"):
            raise MatrixIOError(f"{path}: not a P2/P5 PGM (magic {magic!r})")
        (w_tok, _), (h_tok, _), (max_tok, end) = next(tokens), next(tokens), next(tokens)
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except (StopIteration, ValueError) as exc:
        raise MatrixIOError(f"{path}: malformed PGM header") from exc
    if maxval <= 0 or maxval > 65535:
        raise MatrixIOError(f"{path}: unsupported maxval {maxval}")
    if magic == b"P2":
        values = np.array([int(t) for t, _ in tokens], dtype=np.float64)
        if values.size != width * height:
            raise MatrixIOError(f"{path}: expected {width * height} pixels, got {values.size}")
    else:
        body = raw[end + 1 :]  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        count = width * height
        if len(body) < count * dtype.itemsize:
            raise MatrixIOError(f"{path}: truncated P5 payload")
        values = np.frombuffer(body[: count * dtype.itemsize], dtype=dtype).astype(np.float64)
    return (values / maxval).reshape(height, width)


def write_pgm(path, X: np.ndarray) -> None:
    """Clamp to [0, 1], quantize to 8 bits and write as binary P5."""
    X = np.asarray(X, dtype=np.float64)
    pixels = np.rint(np.clip(X, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{X.shape[1]} {X.shape[0]}\n255\n".encode())
        f.write(pixels.tobytes())


_READERS = {
    ".mtx": read_mtx,
    ".csv": read_csv,
    ".hdmat": read_hdmat,
    ".pgm": read_pgm,
}


def load_matrix(path):
    """Read a matrix file, picking the format from the extension
    (.mtx sparse CSR; .csv/.hdmat dense; .pgm dense in [0, 1])."""
    p = Path(path)
    if not p.exists():
        raise MatrixIOError(f"{p}: no such file")
    reader = _READERS.get(p.suffix.lower())
    if reader is None:
        raise MatrixIOError(
            f"{p}: unsupported extension {p.suffix!r} (expected .mtx/.csv/.hdmat/.pgm)"
        )
    return reader(p)
