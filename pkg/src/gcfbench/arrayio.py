"""Binary array persistence: little-endian payload behind a shape header,
with a JSON metadata file describing the whole model (kind, hyperparameters,
array inventory). Dense and CSR sparse arrays both round-trip.
"""

import json
import os
import struct

import numpy as np
import scipy.sparse as sp

_MAGIC = b"GCFB"
_DTYPES = {0: "<f4", 1: "<f8", 2: "<i8"}
_CODES = {v: k for k, v in _DTYPES.items()}


def save_array(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    dtype = arr.dtype.newbyteorder("<").str
    if dtype not in _CODES:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BB", _CODES[dtype], arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.astype(dtype).tobytes())


def load_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path} is not an array file")
        code, ndim = struct.unpack("<BB", fh.read(2))
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        data = np.frombuffer(fh.read(), dtype=_DTYPES[code])
    return data.reshape(shape).copy()


def save_model(out_dir, kind: str, hyperparameters: dict, arrays: dict) -> None:
    """Persist named arrays (dense ndarray or csr_matrix) plus metadata."""
    os.makedirs(out_dir, exist_ok=True)
    inventory = {}
    for name, arr in arrays.items():
        if sp.issparse(arr):
            csr = arr.tocsr()
            for part, payload in (
                ("indptr", csr.indptr.astype(np.int64)),
                ("indices", csr.indices.astype(np.int64)),
                ("data", csr.data),
            ):
                save_array(os.path.join(out_dir, f"{name}.{part}.bin"), payload)
            inventory[name] = {
                "layout": "csr",
                "shape": list(csr.shape),
                "dtype": str(csr.data.dtype),
            }
        else:
            arr = np.asarray(arr)
            save_array(os.path.join(out_dir, f"{name}.bin"), arr)
            inventory[name] = {
                "layout": "dense",
                "shape": list(arr.shape),
                "dtype": str(arr.dtype),
            }
    meta = {"kind": kind, "hyperparameters": hyperparameters, "arrays": inventory}
    with open(os.path.join(out_dir, "model.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_model(in_dir):
    """Return (kind, hyperparameters, arrays) written by save_model."""
    with open(os.path.join(in_dir, "model.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    arrays = {}
    for name, info in meta["arrays"].items():
        if info["layout"] == "csr":
            indptr = load_array(os.path.join(in_dir, f"{name}.indptr.bin"))
            indices = load_array(os.path.join(in_dir, f"{name}.indices.bin"))
            data = load_array(os.path.join(in_dir, f"{name}.data.bin"))
            arrays[name] = sp.csr_matrix(
                (data, indices, indptr), shape=tuple(info["shape"])
            )
        else:
            arrays[name] = load_array(os.path.join(in_dir, f"{name}.bin"))
    return meta["kind"], meta["hyperparameters"], arrays
