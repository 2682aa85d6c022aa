"""The "GTSR" binary tensor format, plus atomic file-write helpers.

Layout (all little-endian): 4 magic bytes ``GTSR``, one u8 dtype tag
(1 = float32, 2 = float64), one u8 rank, ``rank`` u64 dimensions, then the
raw row-major payload.  Several tensors may be concatenated in one stream;
``read_tensor_from`` consumes exactly one.
"""

import os
import struct
import tempfile

import numpy as np

from .errors import FormatError

MAGIC = b"GTSR"
_TAG_TO_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_TO_TAG = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


def dump_tensor(array) -> bytes:
    # ascontiguousarray would promote rank 0 to rank 1, so only copy on demand
    arr = np.asarray(array)
    if not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    tag = _DTYPE_TO_TAG.get(arr.dtype)
    if tag is None:
        raise FormatError(f"GTSR stores float32 or float64, not {arr.dtype}")
    if arr.ndim > 255:
        raise FormatError("GTSR rank limit is 255")
    header = MAGIC + struct.pack("<BB", tag, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    little = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    return header + dims + little.tobytes(order="C")


def read_tensor_from(f) -> np.ndarray:
    head = f.read(6)
    if len(head) < 6 or head[:4] != MAGIC:
        raise FormatError("not a GTSR tensor (bad magic)")
    tag, rank = struct.unpack("<BB", head[4:6])
    dtype = _TAG_TO_DTYPE.get(tag)
    if dtype is None:
        raise FormatError(f"unknown GTSR dtype tag {tag}")
    dim_bytes = f.read(8 * rank)
    if len(dim_bytes) < 8 * rank:
        raise FormatError("truncated GTSR dimension list")
    shape = struct.unpack(f"<{rank}Q", dim_bytes) if rank else ()
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = f.read(count * dtype.itemsize)
    if len(payload) < count * dtype.itemsize:
        raise FormatError("truncated GTSR payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    # copy: decouple from the read buffer, make writable, keep rank 0 as-is
    return arr.astype(dtype.newbyteorder("="))


def write_tensor(path, array):
    atomic_write_bytes(path, dump_tensor(array))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        arr = read_tensor_from(f)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after tensor payload")
    return arr


def atomic_write_bytes(path, data: bytes):
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))
