"""Matrix files.

Text: a ``DMAT <rows> <cols>`` header, then one line of space-separated
shortest-round-trip decimals per row. Binary: ``DMATB1``, little-endian u64
rows and cols, then rows*cols little-endian float64 values in row-major order.
"""
from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"DMATB1"
_HEADER = struct.Struct("<QQ")
CHUNK_VALUES = 1 << 20


class MatrixFormatError(ValueError):
    pass


def detect_format(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    return "binary" if head == MAGIC else "text"


def save_matrix(path, M, fmt: str = "text") -> None:
    M = np.ascontiguousarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("only 2-D matrices can be saved")
    if not np.all(np.isfinite(M)):
        raise ValueError("refusing to save NaN/Inf values")
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(_HEADER.pack(*M.shape))
            flat = M.reshape(-1)
            for s in range(0, flat.size, CHUNK_VALUES):
                fh.write(flat[s : s + CHUNK_VALUES].astype("<f8", copy=False).tobytes())
    elif fmt == "text":
        with open(path, "w") as fh:
            fh.write(f"DMAT {M.shape[0]} {M.shape[1]}\n")
            for row in M:
                fh.write(" ".join(repr(float(x)) for x in row))
                fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _load_binary(path) -> np.ndarray:
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise MatrixFormatError(f"{path}: bad magic at offset 0")
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise MatrixFormatError(f"{path}: truncated header at offset {len(MAGIC)}")
        rows, cols = _HEADER.unpack(raw)
        start = len(MAGIC) + _HEADER.size
        need = rows * cols
        have = (size - start) // 8
        if have < need:
            raise MatrixFormatError(
                f"{path}: truncated payload, expected {need} values, file holds {have} "
                f"(ends at offset {size})"
            )
        if (size - start) != need * 8:
            raise MatrixFormatError(f"{path}: {size - start - need * 8} trailing bytes after offset {start + need * 8}")
        out = np.empty(need, dtype=np.float64)
        for s in range(0, need, CHUNK_VALUES):
            k = min(CHUNK_VALUES, need - s)
            chunk = np.frombuffer(fh.read(8 * k), dtype="<f8")
            bad = ~np.isfinite(chunk)
            if bad.any():
                at = start + 8 * (s + int(np.argmax(bad)))
                raise MatrixFormatError(f"{path}: non-finite value at offset {at}")
            out[s : s + k] = chunk
    return out.reshape(rows, cols)


def _load_text(path) -> np.ndarray:
    with open(path, "r") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 3 or parts[0] != "DMAT":
            raise MatrixFormatError(f"{path}: line 1: expected 'DMAT <rows> <cols>', got {header.strip()!r}")
        try:
            rows, cols = int(parts[1]), int(parts[2])
        except ValueError:
            raise MatrixFormatError(f"{path}: line 1: non-integer dimensions") from None
        if rows < 0 or cols < 0:
            raise MatrixFormatError(f"{path}: line 1: negative dimensions")
        out = np.empty((rows, cols))
        for i in range(rows):
            line = fh.readline()
            lineno = i + 2
            if not line:
                raise MatrixFormatError(f"{path}: truncated at row {i} (line {lineno}): file ended")
            toks = line.split()
            if len(toks) != cols:
                raise MatrixFormatError(
                    f"{path}: truncated at row {i} (line {lineno}): expected {cols} values, got {len(toks)}"
                )
            try:
                vals = np.array([float(t) for t in toks])
            except ValueError as exc:
                raise MatrixFormatError(f"{path}: line {lineno}: {exc}") from None
            if not np.all(np.isfinite(vals)):
                raise MatrixFormatError(f"{path}: line {lineno}: NaN/Inf value")
            out[i] = vals
        if fh.read().strip():
            raise MatrixFormatError(f"{path}: line {rows + 2}: unexpected data after {rows} rows")
    return out


def load_matrix(path, fmt: str | None = None) -> np.ndarray:
    fmt = fmt or detect_format(path)
    if fmt == "binary":
        return _load_binary(path)
    if fmt == "text":
        return _load_text(path)
    raise ValueError(f"unknown format {fmt!r}")
