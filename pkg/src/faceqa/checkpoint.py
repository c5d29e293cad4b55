"""Self-describing binary checkpoint files with bit-exact round trips.

Layout: magic, u16 version, u32 config length + UTF-8 JSON config block,
u32 tensor count, then per tensor: u16 name length + name, u8 rank,
u32 extents, and the little-endian float64 payload.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .core import Param

_MAGIC = b"FCKP"
_VERSION = 1


def save_checkpoint(path, config: dict, named_params) -> None:
    entries = list(named_params)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        cfg_bytes = json.dumps(config, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        fh.write(struct.pack("<I", len(entries)))
        for name, param in entries:
            arr = param.value.array if isinstance(param, Param) else np.asarray(param)
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = open(path, "rb").read()
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(raw):
            raise ValueError(f"{path}: truncated while reading {what} at byte {off}")
        chunk = raw[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != _MAGIC:
        raise ValueError(f"{path}: bad magic, not a checkpoint file")
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", take(4, "config length"))
    config = json.loads(take(cfg_len, "config block").decode("utf-8"))
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "shape"))
        size = int(np.prod(shape)) if rank else 1
        payload = take(8 * size, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if off != len(raw):
        raise ValueError(f"{path}: {len(raw) - off} trailing bytes after last tensor")
    return config, tensors


def restore_params(named_params, tensors: dict[str, np.ndarray]) -> None:
    """Copy stored values into an existing parameter set; names and shapes must match."""
    entries = list(named_params)
    names = [n for n, _ in entries]
    missing = [n for n in names if n not in tensors]
    extra = [n for n in tensors if n not in set(names)]
    if missing or extra:
        raise ValueError(f"checkpoint/model parameter mismatch: missing={missing}, extra={extra}")
    for name, param in entries:
        stored = tensors[name]
        if stored.shape != param.shape:
            raise ValueError(f"shape mismatch for {name}: model {param.shape}, file {stored.shape}")
        param.value.array[...] = stored
