"""Binary checkpoint: model config, tokenizer merges and float32 parameters.

Layout (all integers little-endian)::

    b"CNPC"  u32 version
    payload:
        u32 len + UTF-8 JSON   model config (plus the vocabulary checksum)
        u32 len + UTF-8 JSON   tokenizer alphabet and merge list
        u32 tensor count
        per tensor: u16 name len, name, u8 ndim, u32 dims..., float32 data
    32-byte SHA-256 of payload
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from typing import Dict, Tuple, Union

import numpy as np

from .autodiff import Tensor
from .model import JointModel, ModelConfig
from .tokenizer import SubwordVocab

MAGIC = b"CNPC"
VERSION = 1


class CheckpointError(ValueError):
    """The file is not a readable checkpoint of this version."""


def _blob(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def dumps(model: JointModel, vocab: SubwordVocab) -> bytes:
    meta = {"model": model.config.to_dict(), "vocab_sha256": vocab.checksum()}
    buf = io.BytesIO()
    buf.write(_blob(json.dumps(meta, sort_keys=True, separators=(",", ":"))))
    buf.write(_blob(vocab.to_json()))
    buf.write(struct.pack("<I", len(model.params)))
    for name, t in model.params.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<B", t.ndim))
        buf.write(struct.pack(f"<{t.ndim}I", *t.shape))
        buf.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    payload = buf.getvalue()
    return MAGIC + struct.pack("<I", VERSION) + payload + hashlib.sha256(payload).digest()


def save(path: Union[str, os.PathLike], model: JointModel, vocab: SubwordVocab) -> str:
    """Write the checkpoint and return the hex SHA-256 of its payload."""
    data = dumps(model, vocab)
    with open(path, "wb") as fh:
        fh.write(data)
    return data[-32:].hex()


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def loads(data: bytes, dtype=np.float32) -> Tuple[JointModel, SubwordVocab]:
    if len(data) < 8 + 32 or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", data[4:8])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    payload, digest = data[8:-32], data[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch")
    r = _Reader(payload)
    meta = json.loads(r.text())
    vocab = SubwordVocab.from_json(r.text())
    if vocab.checksum() != meta.get("vocab_sha256"):
        raise CheckpointError("tokenizer checksum mismatch")
    config = ModelConfig(**meta["model"])
    (count,) = r.unpack("<I")
    params: Dict[str, Tensor] = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape).astype(dtype)
        params[name] = Tensor(arr, requires_grad=True, name=name)
    if r.pos != len(payload):
        raise CheckpointError("trailing bytes in checkpoint payload")
    return JointModel(config, params), vocab


def load(path: Union[str, os.PathLike], dtype=np.float32) -> Tuple[JointModel, SubwordVocab]:
    with open(path, "rb") as fh:
        return loads(fh.read(), dtype)


def checksum(path: Union[str, os.PathLike]) -> str:
    with open(path, "rb") as fh:
        return fh.read()[-32:].hex()
