"""Writer for the MWEV embedding-file contract, version 2.

Layout (u32 fields little-endian): magic "MWEV", version, frames, width,
name length + UTF-8 clip id, layer length + UTF-8 layer tag, then
frames*width float32 little-endian values, row-major.  Version 2 is
version 1 plus the layer tag.
"""

import struct

import numpy as np

MAGIC = b"MWEV"
VERSION = 2


class FormatError(ValueError):
    pass


def write_embedding(path, clip_id, values, layer):
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise FormatError("embedding must be [frames >= 1, width >= 1], got %r"
                          % (arr.shape,))
    clip_b = clip_id.encode("utf-8")
    layer_b = layer.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, arr.shape[0], arr.shape[1]))
        fh.write(struct.pack("<I", len(clip_b)) + clip_b)
        fh.write(struct.pack("<I", len(layer_b)) + layer_b)
        fh.write(arr.tobytes())


def read_header(path):
    """Parse the header of an existing file; returns
    (version, frames, width, clip_id, layer)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError("%s: bad magic %r" % (path, magic))
        version, frames, width = struct.unpack("<III", fh.read(12))
        if version not in (1, 2):
            raise FormatError("%s: unsupported version %d" % (path, version))
        (n,) = struct.unpack("<I", fh.read(4))
        clip_id = fh.read(n).decode("utf-8")
        layer = ""
        if version == 2:
            (n,) = struct.unpack("<I", fh.read(4))
            layer = fh.read(n).decode("utf-8")
        return version, frames, width, clip_id, layer
