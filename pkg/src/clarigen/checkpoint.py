"""Versioned binary checkpoint format.

Layout: the magic string "CLARIGEN1", then one record per parameter:
uint32 name byte-length, UTF-8 name, uint32 rank, rank x uint32 extents,
then row-major little-endian float64 values. Records run to EOF.
"""

import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"CLARIGEN1"


def save(path, arrays):
    """Write name -> ndarray pairs in insertion order."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            enc = name.encode("utf-8")
            f.write(struct.pack("<I", len(enc)))
            f.write(enc)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype("<f8").tobytes(order="C"))


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def load(path):
    """Read back a dict of name -> float64 ndarray, in file order."""
    out = {}
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise CheckpointError("truncated checkpoint while reading name length")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
            shape = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "extents"))
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            raw = _read_exact(f, 8 * count, f"values of {name!r}")
            out[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    return out


def load_into(path, params):
    """Load a checkpoint into existing parameter tensors, validating shapes."""
    loaded = load(path)
    missing = set(params) - set(loaded)
    extra = set(loaded) - set(params)
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter names do not match model "
            f"(missing={sorted(missing)}, unexpected={sorted(extra)})"
        )
    for name, tensor in params.items():
        if loaded[name].shape != tensor.data.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {name!r}: "
                f"checkpoint {loaded[name].shape} vs model {tensor.data.shape}"
            )
    for name, tensor in params.items():
        tensor.data[...] = loaded[name]
