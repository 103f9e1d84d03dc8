"""Self-describing binary checkpoints.

Layout (all integers little-endian):
  8 bytes   magic "UKANCKP1"
  1 byte    format version
  u32       config text length, then UTF-8 config echo
  u32       JSON metadata length, then UTF-8 JSON (epoch, optimizer state
            scalars, RNG state)
  u32       tensor count, then per tensor:
              u16 name length, UTF-8 name
              u8 ndim, ndim x u64 extents
              raw float64 payload
Raw float64 payloads make save -> load -> forward bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .config import RunConfig, config_to_text, parse_config_text
from .errors import FormatError

MAGIC = b"UKANCKP1"
VERSION = 1


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    nb = name.encode()
    head = struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return head + np.ascontiguousarray(arr, dtype=np.float64).tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise FormatError(f"checkpoint truncated at byte {self.off}")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def save_checkpoint(path: str, cfg: RunConfig, tensors: dict[str, np.ndarray],
                    meta: dict) -> None:
    cfg_bytes = config_to_text(cfg).encode()
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            fh.write(_pack_tensor(name, np.asarray(arr)))


def load_checkpoint(path: str) -> tuple[RunConfig, dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(len(MAGIC)) != MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0")
    (version,) = r.unpack("<B")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (n,) = r.unpack("<I")
    cfg = parse_config_text(r.take(n).decode())
    (n,) = r.unpack("<I")
    meta = json.loads(r.take(n).decode())
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        payload = r.take(8 * size)
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if r.off != len(r.data):
        raise FormatError(f"{path}: {len(r.data) - r.off} trailing bytes at byte {r.off}")
    return cfg, tensors, meta
