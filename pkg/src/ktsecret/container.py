"""Minimal bit-exact tensor container ("KTSR") and network weight files.

Layout: magic "KTSR", u16 version, u8 dtype code (1=float64, 2=complex128),
u8 ndim, u64 dims, little-endian row-major payload, trailing CRC32 of the
payload. Weight files are a JSON architecture descriptor plus one KTSR tensor
holding the flat parameter vector.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .net import NetConfig, NetworkParams, init_params

MAGIC = b"KTSR"
VERSION = 1
_DTYPES = {1: np.float64, 2: np.complex128}
_CODES = {np.dtype(np.float64): 1, np.dtype(np.complex128): 2}

__all__ = ["save_tensor", "load_tensor", "save_params", "load_params", "ContainerError"]


class ContainerError(ValueError):
    pass


def save_tensor(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _CODES:
        if np.issubdtype(arr.dtype, np.complexfloating):
            arr = arr.astype(np.complex128)
        else:
            arr = arr.astype(np.float64)
    payload = arr.tobytes()
    header = struct.pack("<4sHBB", MAGIC, VERSION, _CODES[arr.dtype], arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(dims)
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload)))


def load_tensor(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise ContainerError("truncated container")
    magic, version, code, ndim = struct.unpack_from("<4sHBB", blob, 0)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}")
    if code not in _DTYPES:
        raise ContainerError(f"unknown dtype code {code}")
    dims = struct.unpack_from(f"<{ndim}Q", blob, 8)
    dtype = np.dtype(_DTYPES[code])
    start = 8 + 8 * ndim
    n = int(np.prod(dims)) if ndim else 1
    end = start + n * dtype.itemsize
    if len(blob) != end + 4:
        raise ContainerError("payload length mismatch")
    payload = blob[start:end]
    (crc,) = struct.unpack_from("<I", blob, end)
    if crc != zlib.crc32(payload):
        raise ContainerError("CRC mismatch: container corrupted")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def save_params(path, params: NetworkParams, net_cfg: NetConfig) -> None:
    """Write weights as <path> (tensor) + <path>.json (architecture descriptor)."""
    descriptor = {
        "version": 1,
        "frames": net_cfg.frames,
        "depth_levels": net_cfg.depth_levels,
        "base_channels": net_cfg.base_channels,
        "param_count": params.size,
    }
    Path(str(path) + ".json").write_text(json.dumps(descriptor, indent=2))
    save_tensor(path, params.to_flat())


def load_params(path):
    """Returns (NetworkParams, NetConfig); rejects descriptor/tensor mismatch."""
    descriptor = json.loads(Path(str(path) + ".json").read_text())
    if descriptor.get("version") != 1:
        raise ContainerError("unsupported weight descriptor version")
    cfg = NetConfig(frames=descriptor["frames"], depth_levels=descriptor["depth_levels"],
                    base_channels=descriptor["base_channels"])
    flat = load_tensor(path)
    template = init_params(cfg, seed=0)
    if flat.size != template.size or flat.size != descriptor["param_count"]:
        raise ContainerError("weight vector does not match architecture descriptor")
    return template.from_flat(flat), cfg
