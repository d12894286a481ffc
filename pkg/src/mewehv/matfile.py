"""Binary named-matrix blocks, little-endian, 32-bit float payloads.

Block layout (all integers u32 little-endian):

    magic   4 bytes  b"MWEV"
    version u32      1 or 2
    rows    u32      > 0
    cols    u32      > 0
    name    u32 length + UTF-8 bytes
    layer   u32 length + UTF-8 bytes        (version 2 only)
    payload rows*cols float32 little-endian, row-major

A file may hold a single block (embedding files; trailing bytes are
rejected) or a concatenated sequence of blocks (parameter checkpoints).
"""

import struct

import numpy as np

MAGIC = b"MWEV"
VERSIONS = (1, 2)


class MatrixFileError(Exception):
    pass


class BadMagicError(MatrixFileError):
    pass


class TruncatedPayloadError(MatrixFileError):
    pass


class DimensionMismatchError(MatrixFileError):
    pass


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedPayloadError("file ends inside %s (wanted %d bytes, got %d)"
                                    % (what, n, len(buf)))
    return buf


def _read_u32(fh, what):
    return struct.unpack("<I", _read_exact(fh, 4, what))[0]


def _read_str(fh, what):
    n = _read_u32(fh, what + " length")
    return _read_exact(fh, n, what).decode("utf-8")


def write_block(fh, name, array, version=1, layer=None):
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("block payload must be 2-D, got shape %r" % (arr.shape,))
    rows, cols = arr.shape
    if rows == 0 or cols == 0:
        raise DimensionMismatchError("block dimensions must be positive, got %dx%d"
                                     % (rows, cols))
    if version not in VERSIONS:
        raise ValueError("unsupported version %d" % version)
    if version == 1 and layer is not None:
        raise ValueError("layer metadata requires version 2")
    fh.write(MAGIC)
    fh.write(struct.pack("<III", version, rows, cols))
    name_b = name.encode("utf-8")
    fh.write(struct.pack("<I", len(name_b)) + name_b)
    if version == 2:
        layer_b = (layer or "").encode("utf-8")
        fh.write(struct.pack("<I", len(layer_b)) + layer_b)
    fh.write(np.ascontiguousarray(arr).tobytes())


def read_block(fh):
    """Read one block; returns (name, float32 array, layer) or None at EOF."""
    magic = fh.read(4)
    if len(magic) == 0:
        return None
    if len(magic) < 4 or magic != MAGIC:
        raise BadMagicError("bad magic %r (expected %r)" % (magic, MAGIC))
    version = _read_u32(fh, "version")
    if version not in VERSIONS:
        raise MatrixFileError("unsupported version %d" % version)
    rows = _read_u32(fh, "row count")
    cols = _read_u32(fh, "column count")
    if rows == 0 or cols == 0:
        raise DimensionMismatchError("header declares %dx%d matrix" % (rows, cols))
    name = _read_str(fh, "name")
    layer = _read_str(fh, "layer tag") if version == 2 else None
    payload = _read_exact(fh, rows * cols * 4, "payload")
    arr = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    return name, arr, layer


def write_matrix_file(path, name, array, version=1, layer=None):
    with open(path, "wb") as fh:
        write_block(fh, name, array, version=version, layer=layer)


def read_matrix_file(path):
    """Read a single-block file; trailing bytes are a dimension mismatch."""
    with open(path, "rb") as fh:
        block = read_block(fh)
        if block is None:
            raise TruncatedPayloadError("empty file: %s" % path)
        if fh.read(1):
            raise DimensionMismatchError(
                "trailing bytes after payload (header dimensions inconsistent)")
    return block


def write_container(path, named_arrays):
    with open(path, "wb") as fh:
        for name, arr in named_arrays:
            write_block(fh, name, arr)


def read_container(path):
    blocks = []
    with open(path, "rb") as fh:
        while True:
            block = read_block(fh)
            if block is None:
                return blocks
            blocks.append((block[0], block[1]))
