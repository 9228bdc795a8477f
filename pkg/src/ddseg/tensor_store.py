"""Bit-exact dense tensor container (DDT1).

Layout: magic ``DDT1`` (4 bytes), dtype code u8, ndim u8, then ndim
little-endian u64 dimension sizes, then the row-major payload in
little-endian order.  File size is exactly
``6 + 8*ndim + itemsize*product(shape)``.

This is the sole wire format between the engine, its fixtures, and any
external feature extractor.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ddseg.errors import (
    TensorFormatError,
    TensorLengthError,
    UnsupportedDtypeError,
)

MAGIC = b"DDT1"

# dtype name -> (code, little-endian numpy dtype)
_DTYPES = {
    "f32": (1, np.dtype("<f4")),
    "f64": (2, np.dtype("<f8")),
    "u8": (3, np.dtype("u1")),
    "i64": (4, np.dtype("<i8")),
}
_CODE_TO_NAME = {code: name for name, (code, _) in _DTYPES.items()}

_NUMPY_TO_NAME = {
    np.dtype(np.float32): "f32",
    np.dtype(np.float64): "f64",
    np.dtype(np.uint8): "u8",
    np.dtype(np.int64): "i64",
}

MAX_NDIM = 4


@dataclass(eq=False)
class DenseTensor:
    """Shape-tagged row-major numeric array.

    ``data`` keeps the stored dtype so that write/read round-trips are
    bit-exact; promotion to f64 happens only when a consumer asks for
    working values via :meth:`as_f64`.
    """

    dtype: str
    shape: tuple[int, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dtype not in _DTYPES:
            raise UnsupportedDtypeError(f"unknown dtype {self.dtype!r}")
        self.shape = tuple(int(d) for d in self.shape)
        if not 1 <= len(self.shape) <= MAX_NDIM:
            raise TensorFormatError(
                f"ndim must be 1..{MAX_NDIM}, got {len(self.shape)}"
            )
        if any(d < 1 for d in self.shape):
            raise TensorFormatError(f"dimensions must be >= 1, got {self.shape}")
        np_dtype = _DTYPES[self.dtype][1]
        arr = np.asarray(self.data, dtype=np_dtype).reshape(-1)
        n = int(np.prod(self.shape))
        if arr.size != n:
            raise TensorLengthError(
                f"data length {arr.size} != product(shape) {n}"
            )
        self.data = arr

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        # byte comparison keeps NaN payloads and signed zeros distinct
        return (
            self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    def reshaped(self) -> np.ndarray:
        """Data in its declared shape, stored dtype preserved."""
        return self.data.reshape(self.shape)

    def as_f64(self) -> np.ndarray:
        """Shaped values promoted to float64 for downstream arithmetic."""
        return self.data.reshape(self.shape).astype(np.float64)


def tensor_from_array(arr: np.ndarray) -> DenseTensor:
    """Wrap a numpy array whose dtype maps onto a container dtype."""
    key = np.dtype(arr.dtype)
    if key not in _NUMPY_TO_NAME:
        raise UnsupportedDtypeError(f"no container dtype for numpy {key}")
    a = np.ascontiguousarray(arr)
    return DenseTensor(_NUMPY_TO_NAME[key], a.shape, a.reshape(-1))


def write_tensor(t: DenseTensor, path) -> None:
    """Serialize ``t`` to ``path``; byte-identical for identical inputs."""
    code, np_dtype = _DTYPES[t.dtype]
    header = MAGIC + struct.pack("<BB", code, len(t.shape))
    dims = struct.pack(f"<{len(t.shape)}Q", *t.shape)
    payload = np.ascontiguousarray(t.data, dtype=np_dtype).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(payload)


def read_tensor(path) -> DenseTensor:
    """Deserialize; strict about header fields, length, and trailing bytes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise TensorFormatError(f"{path}: missing DDT1 magic")
    code, ndim = struct.unpack_from("<BB", blob, 4)
    if code not in _CODE_TO_NAME:
        raise UnsupportedDtypeError(f"{path}: unknown dtype code {code}")
    if not 1 <= ndim <= MAX_NDIM:
        raise TensorFormatError(f"{path}: ndim {ndim} outside 1..{MAX_NDIM}")
    dims_end = 6 + 8 * ndim
    if len(blob) < dims_end:
        raise TensorLengthError(f"{path}: truncated dimension table")
    shape = struct.unpack_from(f"<{ndim}Q", blob, 6)
    if any(d < 1 for d in shape):
        raise TensorFormatError(f"{path}: zero-sized dimension in {shape}")
    name = _CODE_TO_NAME[code]
    np_dtype = _DTYPES[name][1]
    expected = int(np.prod(shape)) * np_dtype.itemsize
    payload = blob[dims_end:]
    if len(payload) != expected:
        raise TensorLengthError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype=np_dtype).copy()
    return DenseTensor(name, shape, data)
