"""Writer and reader for the DDT1 dense tensor container.

This is an independent implementation of the engine's wire format so the
extractor carries no code dependency on it.  Layout: magic ``DDT1``,
dtype code u8 (1=f32, 2=f64, 3=u8, 4=i64), ndim u8, ndim little-endian
u64 dimension sizes, then the row-major payload in little-endian order.
"""

from __future__ import annotations

import struct

import numpy as np

from ddseg_extractor.errors import TensorFormatError

MAGIC = b"DDT1"
MAX_NDIM = 4

_CODES = {
    np.dtype("<f4"): 1,
    np.dtype("<f8"): 2,
    np.dtype("u1"): 3,
    np.dtype("<i8"): 4,
}
_DTYPES = {code: dt for dt, code in _CODES.items()}


def write_tensor(arr: np.ndarray, path) -> None:
    """Serialize ``arr`` to ``path``; identical arrays give identical bytes."""
    a = np.ascontiguousarray(arr)
    key = a.dtype.newbyteorder("<")
    if key not in _CODES:
        raise TensorFormatError(f"dtype {a.dtype} has no container code")
    if not 1 <= a.ndim <= MAX_NDIM:
        raise TensorFormatError(f"ndim must be 1..{MAX_NDIM}, got {a.ndim}")
    if a.size == 0:
        raise TensorFormatError("refusing to write an empty tensor")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", _CODES[key], a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.astype(key, copy=False).tobytes())


def read_tensor(path) -> np.ndarray:
    """Deserialize a container into a shaped array, rejecting any damage."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise TensorFormatError(f"{path}: missing DDT1 magic")
    code, ndim = struct.unpack_from("<BB", blob, 4)
    if code not in _DTYPES:
        raise TensorFormatError(f"{path}: unknown dtype code {code}")
    if not 1 <= ndim <= MAX_NDIM:
        raise TensorFormatError(f"{path}: ndim {ndim} outside 1..{MAX_NDIM}")
    if len(blob) < 6 + 8 * ndim:
        raise TensorFormatError(f"{path}: truncated dimension table")
    shape = struct.unpack_from(f"<{ndim}Q", blob, 6)
    if any(d < 1 for d in shape):
        raise TensorFormatError(f"{path}: zero-sized dimension in {shape}")
    dtype = _DTYPES[code]
    payload = blob[6 + 8 * ndim:]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(payload) != expected:
        raise TensorFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).copy().reshape(shape)
