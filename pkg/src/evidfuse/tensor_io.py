"""Bit-exact tensor file I/O.

Grids are stored in the NPY v1.0 container: magic ``\\x93NUMPY``, version
``\\x01\\x00``, a little-endian uint16 header length, then an ASCII literal
dict declaring dtype, order, and shape, space-padded so the payload starts
on a 64-byte boundary. Only little-endian float32 (``<f4``) and uint8
(``|u1``) payloads in C order are accepted; anything else is rejected
rather than converted, so a round trip through :func:`save_tensor` and
:func:`load_tensor` is byte-for-byte exact.
"""

from __future__ import annotations

import ast
import struct

import numpy as np

from .exceptions import (
    TensorCorruptionError,
    TensorEncodingError,
    TensorFormatError,
    TensorIOError,
)
from .validation import MAX_ELEMENTS, check_volume

MAGIC = b"\x93NUMPY"
VERSION = b"\x01\x00"
HEADER_ALIGN = 64

_DESCR_TO_DTYPE = {"<f4": np.dtype("<f4"), "|u1": np.dtype("|u1")}
_MAX_NDIM = 4


def _header_bytes(descr, shape):
    body = "{'descr': %r, 'fortran_order': False, 'shape': %r, }" % (descr, shape)
    base = len(MAGIC) + len(VERSION) + 2  # magic + version + uint16 length
    pad = HEADER_ALIGN - ((base + len(body) + 1) % HEADER_ALIGN)
    pad %= HEADER_ALIGN
    header = body + " " * pad + "\n"
    return MAGIC + VERSION + struct.pack("<H", len(header)) + header.encode("latin1")


def save_tensor(grid, path):
    """Write a float32 or uint8 grid to ``path`` in the container format.

    Float inputs of other widths are narrowed to float32 first; integer
    inputs must already be uint8.
    """
    arr = np.asarray(grid)
    if np.issubdtype(arr.dtype, np.floating):
        arr = check_volume(arr, name="grid", dtype=np.float32)
        descr = "<f4"
    elif arr.dtype == np.uint8:
        arr = np.ascontiguousarray(arr)
        descr = "|u1"
    else:
        raise TensorEncodingError(
            f"cannot encode dtype {arr.dtype}; expected float or uint8"
        )
    if not 1 <= arr.ndim <= _MAX_NDIM:
        raise TensorFormatError(
            f"tensor rank must be 1..{_MAX_NDIM}, got shape {arr.shape}"
        )
    payload = arr.astype(_DESCR_TO_DTYPE[descr], copy=False).tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(_header_bytes(descr, arr.shape))
            fh.write(payload)
    except OSError as exc:
        raise TensorIOError(f"cannot write tensor to {path}: {exc}") from exc


def load_tensor(path):
    """Read a tensor file, returning a float32 or uint8 C-order ndarray."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise TensorIOError(f"cannot read tensor from {path}: {exc}") from exc
    return loads_tensor(raw, name=str(path))


def loads_tensor(raw, name="<bytes>"):
    """Decode an in-memory tensor file. See :func:`load_tensor`."""
    if len(raw) < 10 or raw[:6] != MAGIC:
        raise TensorFormatError(f"{name}: not a tensor file (bad magic)")
    if raw[6:8] != VERSION:
        raise TensorEncodingError(
            f"{name}: unsupported container version {raw[6]}.{raw[7]}"
        )
    (hlen,) = struct.unpack("<H", raw[8:10])
    if len(raw) < 10 + hlen:
        raise TensorFormatError(f"{name}: truncated header")
    header = raw[10 : 10 + hlen]
    if not header.endswith(b"\n"):
        raise TensorFormatError(f"{name}: header does not end in newline")
    try:
        meta = ast.literal_eval(header.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise TensorFormatError(f"{name}: unparseable header") from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise TensorFormatError(f"{name}: header keys must be descr/fortran_order/shape")

    descr = meta["descr"]
    if descr not in _DESCR_TO_DTYPE:
        raise TensorEncodingError(f"{name}: unsupported dtype {descr!r}")
    if meta["fortran_order"] is not False:
        raise TensorEncodingError(f"{name}: Fortran-order payloads not supported")
    shape = meta["shape"]
    if (
        not isinstance(shape, tuple)
        or not 1 <= len(shape) <= _MAX_NDIM
        or not all(isinstance(d, int) and d >= 1 for d in shape)
    ):
        raise TensorFormatError(f"{name}: bad shape {shape!r}")
    count = 1
    for d in shape:
        count *= d
    if count > MAX_ELEMENTS:
        raise TensorFormatError(
            f"{name}: element count {count} exceeds the 32-bit limit"
        )

    dtype = _DESCR_TO_DTYPE[descr]
    payload = raw[10 + hlen :]
    if len(payload) != count * dtype.itemsize:
        raise TensorCorruptionError(
            f"{name}: payload holds {len(payload)} bytes, "
            f"header declares {count * dtype.itemsize}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    # Finite-only contract for float grids: reject rather than propagate.
    return check_volume(arr, name=name)
