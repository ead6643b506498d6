"""Named parameter collections with a bit-exact binary file format.

Layout: magic, format version, init seed, tensor count, then per tensor a
length-prefixed name, dtype code, shape, and raw little-endian data.
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

from ..errors import DataError

MAGIC = b"GFPARAMS"
VERSION = 1

_DTYPE_CODES = {0: "<f4", 1: "<f8", 2: "<i8"}
_CODE_FOR = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}


class ParamStore:
    """Ordered name -> array map plus the rng seed used at initialization."""

    def __init__(self, tensors=None, seed: int = 0):
        self.tensors: OrderedDict[str, np.ndarray] = OrderedDict(tensors or {})
        self.seed = int(seed)

    def __len__(self):
        return len(self.tensors)

    def __contains__(self, name):
        return name in self.tensors

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def total_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def save(self, path):
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<Iq I", VERSION, self.seed, len(self.tensors)))
            for name, arr in self.tensors.items():
                if arr.dtype not in _CODE_FOR:
                    raise DataError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
                nb = name.encode("utf-8")
                f.write(struct.pack("<H", len(nb)))
                f.write(nb)
                f.write(struct.pack("<BB", _CODE_FOR[arr.dtype], arr.ndim))
                f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                f.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())

    @classmethod
    def load(cls, path) -> "ParamStore":
        with open(path, "rb") as f:
            if f.read(len(MAGIC)) != MAGIC:
                raise DataError(f"{path}: not a parameter file (bad magic)")
            version, seed, count = struct.unpack("<Iq I", f.read(16))
            if version != VERSION:
                raise DataError(f"{path}: unsupported format version {version}")
            tensors = OrderedDict()
            for _ in range(count):
                (nlen,) = struct.unpack("<H", f.read(2))
                name = f.read(nlen).decode("utf-8")
                code, ndim = struct.unpack("<BB", f.read(2))
                shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
                dtype = np.dtype(_DTYPE_CODES[code])
                n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
                data = f.read(n_bytes)
                if len(data) != n_bytes:
                    raise DataError(f"{path}: truncated tensor {name!r}")
                tensors[name] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
        return cls(tensors, seed)
