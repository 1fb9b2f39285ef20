"""Binary checkpoint container for :class:`~sparseseg.segnet.ModelParams`.

Layout (all integers little-endian)::

    magic      8 bytes   b"SPSEGCK\\0"
    version    u32       currently 1
    cfg_len    u32       length of the config JSON
    cfg        cfg_len   UTF-8 JSON of NetConfig (plus optional "meta")
    count      u32       number of tensors
    then per tensor, in parameter order:
      name_len u16, name (UTF-8)
      ndim     u8, dims u32 * ndim
      data     float64 little-endian, row-major, prod(dims) values

Values are stored as raw IEEE-754 doubles so save/load is bit-exact.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .segnet import ModelParams, NetConfig

MAGIC = b"SPSEGCK\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save(params: ModelParams, path, meta: dict | None = None) -> None:
    header = {"config": params.config.to_dict()}
    if meta:
        header["meta"] = meta
    cfg = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg, struct.pack("<I", len(params.tensors))]
    for name, node in params.tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(node.value, dtype="<f8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load(path) -> tuple[ModelParams, dict]:
    """Return the parameters and the optional metadata dict."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from exc
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a sparseseg checkpoint")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    version, cfg_len = take("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(blob[pos : pos + cfg_len].decode("utf-8"))
    pos += cfg_len
    config = NetConfig.from_dict(header["config"])
    (count,) = take("<I")
    tensors: dict[str, ad.Node] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<B")
        dims = take(f"<{ndim}I")
        size = int(np.prod(dims)) if dims else 1
        nbytes = 8 * size
        if pos + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated tensor {name!r}")
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(dims).astype(np.float64)
        pos += nbytes
        tensors[name] = ad.parameter(arr, name)
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    expected = ModelParams.init(config, seed=0)
    for name, node in expected.tensors.items():
        if name not in tensors or tensors[name].shape != node.shape:
            raise CheckpointError(f"{path}: tensor {name!r} missing or mis-shaped for the stored config")
    params = ModelParams(config, {name: tensors[name] for name in expected.tensors})
    return params, header.get("meta", {})
