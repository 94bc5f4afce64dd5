"""Binary network checkpoints.

Layout (little-endian throughout):

    bytes 0-3   magic "DSNN"
    u16         format version (1)
    u32         descriptor byte length L
    L bytes     UTF-8 architecture descriptor text
    u32         tensor count
    per tensor: u8 ndim, ndim * u32 dims, then prod(dims) float32 values

Tensors are the trainable parameters in declaration order followed by
each batch-norm layer's running mean and variance (required to reproduce
inference exactly).  Values are stored as 32-bit floats; in-memory
compute stays double precision.
"""

import struct

import numpy as np

from ..errors import FormatError

MAGIC = b"DSNN"
VERSION = 1


def save_checkpoint(path, descriptor, tensors):
    """Write descriptor text and float tensors to `path`."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    desc = descriptor.encode("utf-8")
    blob += struct.pack("<I", len(desc))
    blob += desc
    blob += struct.pack("<I", len(tensors))
    for t in tensors:
        t32 = np.asarray(t, dtype="<f4")
        blob += struct.pack("<B", t32.ndim)
        for d in t32.shape:
            blob += struct.pack("<I", d)
        blob += t32.tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path):
    """Read a checkpoint; returns (descriptor, list of float32 arrays)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("bad magic at offset 0")
    off = 4
    if len(data) < off + 2:
        raise FormatError(f"truncated header at offset {off}")
    (version,) = struct.unpack_from("<H", data, off)
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset {off}")
    off += 2
    if len(data) < off + 4:
        raise FormatError(f"truncated descriptor length at offset {off}")
    (desc_len,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + desc_len:
        raise FormatError(f"truncated descriptor at offset {off}")
    descriptor = data[off:off + desc_len].decode("utf-8")
    off += desc_len
    if len(data) < off + 4:
        raise FormatError(f"truncated tensor count at offset {off}")
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    tensors = []
    for _ in range(count):
        if len(data) < off + 1:
            raise FormatError(f"truncated tensor header at offset {off}")
        ndim = data[off]
        off += 1
        if len(data) < off + 4 * ndim:
            raise FormatError(f"truncated shape header at offset {off}")
        shape = struct.unpack_from(f"<{ndim}I", data, off) if ndim else ()
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        nbytes = 4 * n
        if len(data) < off + nbytes:
            raise FormatError(
                f"tensor payload of {nbytes} bytes exceeds file at offset {off}")
        flat = np.frombuffer(data[off:off + nbytes], dtype="<f4")
        tensors.append(flat.reshape(shape).copy())
        off += nbytes
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes at offset {off}")
    return descriptor, tensors
