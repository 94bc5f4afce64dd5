"""CT volume container and its binary file format.

CTV1 layout (little-endian, 32-byte header):

    bytes 0-3    magic "CTV1"
    u16          format version (1)
    u16          reserved (0)
    u32, u32, u32  D, H, W
    u8           value-space code: 0 = raw int16, 1 = HU float32
    u8           label: 0 absent, 1 present, 255 unlabeled
    f32          rescale slope
    f32          rescale intercept
    2 bytes      zero padding
    payload      D*H*W voxels, row-major, W fastest, in the declared type

The dataset manifest is a UTF-8 text file with one `id,path,label` record
per line; paths are resolved relative to the manifest's directory.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, FormatError

MAGIC = b"CTV1"
VERSION = 1
HEADER = struct.Struct("<4sHHIIIBBff2x")
assert HEADER.size == 32

SPACE_RAW = "raw"
SPACE_HU = "hu"
_SPACE_CODES = {SPACE_RAW: 0, SPACE_HU: 1}
_CODE_SPACES = {v: k for k, v in _SPACE_CODES.items()}
LABEL_UNLABELED = 255


@dataclass
class Volume:
    voxels: np.ndarray            # [D,H,W]
    slope: float = 1.0
    intercept: float = 0.0
    value_space: str = SPACE_RAW
    label: int = LABEL_UNLABELED

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels)
        if self.voxels.ndim != 3:
            raise ContractError(f"volume voxels must be 3-d, got shape {self.voxels.shape}")
        if self.slope == 0:
            raise ContractError("rescale slope must be nonzero")
        if self.value_space not in _SPACE_CODES:
            raise ContractError(f"unknown value space {self.value_space!r}")
        if self.label not in (0, 1, LABEL_UNLABELED):
            raise ContractError(f"label must be 0, 1 or {LABEL_UNLABELED}, got {self.label}")

    @property
    def dims(self):
        return self.voxels.shape


def write_volume(volume, path=None):
    """Serialize to CTV1 bytes; also writes `path` when given."""
    d, h, w = volume.dims
    code = _SPACE_CODES[volume.value_space]
    dtype = "<i2" if code == 0 else "<f4"
    payload = np.ascontiguousarray(volume.voxels, dtype=dtype).tobytes(order="C")
    header = HEADER.pack(MAGIC, VERSION, 0, d, h, w, code, volume.label,
                         volume.slope, volume.intercept)
    blob = header + payload
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(blob)
    return blob


def read_volume(source):
    """Parse a CTV1 file path or bytes into a Volume."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("bad magic at offset 0")
    if len(data) < HEADER.size:
        raise FormatError(f"truncated header: {len(data)} bytes, need {HEADER.size}")
    magic, version, reserved, d, h, w, code, label, slope, intercept = \
        HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if code not in _CODE_SPACES:
        raise FormatError(f"unknown value-space code {code} at offset 20")
    if label not in (0, 1, LABEL_UNLABELED):
        raise FormatError(f"invalid label byte {label} at offset 21")
    dtype = np.dtype("<i2") if code == 0 else np.dtype("<f4")
    expected = d * h * w * dtype.itemsize
    actual = len(data) - HEADER.size
    if actual != expected:
        raise FormatError(
            f"payload of {actual} bytes does not match dims {d}x{h}x{w} "
            f"({expected} bytes expected) at offset {HEADER.size}")
    voxels = np.frombuffer(data, dtype=dtype, count=d * h * w,
                           offset=HEADER.size).reshape(d, h, w).copy()
    return Volume(voxels=voxels, slope=float(slope), intercept=float(intercept),
                  value_space=_CODE_SPACES[code], label=int(label))


@dataclass
class ManifestRecord:
    id: str
    path: str
    label: int


def write_manifest(records, path):
    lines = [f"{r.id},{r.path},{r.label}" for r in records]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path):
    records = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(f"manifest line {lineno}: expected id,path,label")
            rid, rel, label = (p.strip() for p in parts)
            try:
                label = int(label)
            except ValueError:
                raise FormatError(f"manifest line {lineno}: label {label!r} not an int")
            records.append(ManifestRecord(rid, os.path.join(base, rel), label))
    return records
