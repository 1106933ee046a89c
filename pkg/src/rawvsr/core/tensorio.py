"""Binary tensor files and checkpoint directories.

Tensor file layout (extension ``.rvt``): magic ``RVT1``, little-endian u32
rank, rank little-endian u32 dims, then the row-major float64 payload,
little-endian. A checkpoint is a directory of tensor files plus a text index
``index.txt`` with one ``name<TAB>file<TAB>dims`` line per tensor (dims
joined by ``x``, scalars written as ``-``).
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"RVT1"
INDEX_NAME = "index.txt"


def save_tensor(path, array):
    # asarray keeps 0-d arrays 0-d (ascontiguousarray would promote to 1-d)
    array = np.asarray(array, dtype=np.float64, order="C")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", array.ndim))
        fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
        fh.write(array.astype("<f8").tobytes())


def load_tensor(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
        count = int(np.prod(dims)) if dims else 1
        payload = fh.read(8 * count)
        if len(payload) != 8 * count:
            raise ValueError(f"{path}: truncated payload ({len(payload)} of {8 * count} bytes)")
        trailing = fh.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


def _dims_token(shape):
    return "x".join(str(d) for d in shape) if shape else "-"


def save_checkpoint(directory, named_arrays, extra_text=None):
    """Write named tensors plus an index; ``extra_text`` maps filename->str."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, arr in named_arrays.items():
        fname = name + ".rvt"
        save_tensor(directory / fname, arr)
        lines.append(f"{name}\t{fname}\t{_dims_token(np.shape(arr))}")
    (directory / INDEX_NAME).write_text("\n".join(lines) + "\n")
    for fname, text in (extra_text or {}).items():
        (directory / fname).write_text(text)


def load_checkpoint(directory):
    """Read a checkpoint directory back into an ordered name->array dict."""
    directory = Path(directory)
    index = directory / INDEX_NAME
    if not index.is_file():
        raise FileNotFoundError(f"no {INDEX_NAME} in {directory}")
    out = {}
    for line in index.read_text().splitlines():
        if not line.strip():
            continue
        name, fname, dims = line.split("\t")
        arr = load_tensor(directory / fname)
        expect = () if dims == "-" else tuple(int(d) for d in dims.split("x"))
        if arr.shape != expect:
            raise ValueError(f"{name}: file shape {arr.shape} != index shape {expect}")
        out[name] = arr
    return out
