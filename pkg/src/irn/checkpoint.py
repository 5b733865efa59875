"""Binary checkpoint container (``.irnc``).

Layout, all integers little-endian::

    magic        4 bytes  b"IRNC"
    version      u32      1
    variant      u16 length + UTF-8
    scale        u32
    config       u32 length + UTF-8 "key=value" lines, sorted by key
    tensors      u32 count, then records
    optimizers   u32 count, then per optimizer:
                   name u16 length + UTF-8
                   t u64, lr f64, beta1 f64, beta2 f64, eps f64
                   u32 count of moment records named "m.<param>" / "v.<param>"
    rng          u32 length + UTF-8 JSON of the Philox generator state

A tensor record is: name (u16 length + UTF-8), dtype code u8 (0 = float32,
1 = float64), rank u8, rank x u32 dims, then the raw C-order values.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optim import AdamState

MAGIC = b"IRNC"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    variant: str
    scale: int
    config: dict[str, str]
    tensors: dict[str, np.ndarray]
    optimizers: dict[str, AdamState] = field(default_factory=dict)
    rng_state: str = "{}"

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Tensors whose name starts with ``prefix``, with the prefix stripped."""
        n = len(prefix)
        return {k[n:]: v for k, v in self.tensors.items() if k.startswith(prefix)}


def _w_str(buf, s: str, width: str = "<H") -> None:
    b = s.encode("utf-8")
    buf.write(struct.pack(width, len(b)))
    buf.write(b)


def _r_exact(buf, n: int) -> bytes:
    b = buf.read(n)
    if len(b) != n:
        raise CheckpointError("truncated checkpoint")
    return b


def _r_str(buf, width: str = "<H") -> str:
    (n,) = struct.unpack(width, _r_exact(buf, struct.calcsize(width)))
    return _r_exact(buf, n).decode("utf-8")


def _w_tensor(buf, name: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype not in _CODES:
        arr = arr.astype(np.float32)
    code = _CODES[arr.dtype]
    _w_str(buf, name)
    buf.write(struct.pack("<BB", code, arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def _r_tensor(buf) -> tuple[str, np.ndarray]:
    name = _r_str(buf)
    code, rank = struct.unpack("<BB", _r_exact(buf, 2))
    if code not in _DTYPES:
        raise CheckpointError(f"unknown dtype code {code} for tensor {name!r}")
    dims = struct.unpack(f"<{rank}I", _r_exact(buf, 4 * rank))
    dt = _DTYPES[code]
    count = int(np.prod(dims)) if rank else 1
    arr = np.frombuffer(_r_exact(buf, count * dt.itemsize), dtype=dt).reshape(dims)
    return name, arr.astype(dt.newbyteorder("="))


def to_bytes(ck: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _w_str(buf, ck.variant)
    buf.write(struct.pack("<I", ck.scale))
    for k, v in ck.config.items():
        if "=" in k or "\n" in k or "\n" in str(v) or not k:
            raise CheckpointError(f"config entry {k!r} cannot be stored as a key=value line")
    _w_str(buf, "".join(f"{k}={ck.config[k]}\n" for k in sorted(ck.config)), "<I")
    buf.write(struct.pack("<I", len(ck.tensors)))
    for name in sorted(ck.tensors):
        _w_tensor(buf, name, ck.tensors[name])
    buf.write(struct.pack("<I", len(ck.optimizers)))
    for oname in sorted(ck.optimizers):
        st = ck.optimizers[oname]
        _w_str(buf, oname)
        buf.write(struct.pack("<Qdddd", st.t, st.lr, st.beta1, st.beta2, st.eps))
        names = sorted(st.m)
        buf.write(struct.pack("<I", 2 * len(names)))
        for n in names:
            _w_tensor(buf, "m." + n, st.m[n])
            _w_tensor(buf, "v." + n, st.v[n])
    _w_str(buf, ck.rng_state, "<I")
    return buf.getvalue()


def from_bytes(data: bytes) -> Checkpoint:
    buf = io.BytesIO(data)
    if buf.read(4) != MAGIC:
        raise CheckpointError("not an IRN checkpoint (bad magic)")
    (version,) = struct.unpack("<I", _r_exact(buf, 4))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    variant = _r_str(buf)
    (scale,) = struct.unpack("<I", _r_exact(buf, 4))
    config = {}
    for line in _r_str(buf, "<I").split("\n"):
        if line:
            k, _, v = line.partition("=")
            config[k] = v
    (n,) = struct.unpack("<I", _r_exact(buf, 4))
    tensors = dict(_r_tensor(buf) for _ in range(n))
    (n_opt,) = struct.unpack("<I", _r_exact(buf, 4))
    optimizers = {}
    for _ in range(n_opt):
        oname = _r_str(buf)
        t, lr, b1, b2, eps = struct.unpack("<Qdddd", _r_exact(buf, 40))
        st = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps, t=t)
        (cnt,) = struct.unpack("<I", _r_exact(buf, 4))
        for _ in range(cnt):
            name, arr = _r_tensor(buf)
            kind, _, pname = name.partition(".")
            (st.m if kind == "m" else st.v)[pname] = arr
        optimizers[oname] = st
    rng_state = _r_str(buf, "<I")
    return Checkpoint(variant, scale, config, tensors, optimizers, rng_state)


def save_checkpoint(ck: Checkpoint, path) -> None:
    Path(path).write_bytes(to_bytes(ck))


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
