"""
Binary checkpoint format.

Layout (little-endian):
    b"LRNMT"                       magic
    u32                            format version
    str                            model kind ("seq2seq", "rerank")
    str                            hyper block (JSON)
    u32 n, n x str                 vocabulary content hashes
    u32 m, m x tensor              named float32 parameter blobs
    32 bytes                       SHA-256 of everything above

str = u32 byte length + UTF-8 bytes
tensor = str name, u32 ndim, ndim x u32 shape, raw f32 data
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple, Type

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, ValidationError

from app.core.artifacts import ensure_dir
from app.core.errors import ArtifactWriteError, CorruptCheckpoint, CorpusReadError
from app.modules.nnet.model import ModelHyper, Seq2SeqModel

logger = logging.getLogger(__name__)

MAGIC = b"LRNMT"
FORMAT_VERSION = 1
DIGEST_SIZE = 32

# kind -> (hyper model, factory(hyper, vocab_hashes))
MODEL_KINDS: Dict[str, Tuple[Type[BaseModel], Callable[..., nn.Module]]] = {}


def register_model_kind(
    kind: str, hyper_cls: Type[BaseModel], factory: Callable[..., nn.Module]
) -> None:
    MODEL_KINDS[kind] = (hyper_cls, factory)


register_model_kind(
    Seq2SeqModel.kind,
    ModelHyper,
    lambda hyper, vocab_hashes: Seq2SeqModel(hyper, vocab_hashes=vocab_hashes),
)


def _put_str(buf: bytearray, value: str) -> None:
    data = value.encode("utf-8")
    buf += struct.pack("<I", len(data))
    buf += data


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CorruptCheckpoint("checkpoint is truncated")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptCheckpoint(f"bad string in checkpoint: {exc}") from exc


def encode_checkpoint(model: nn.Module) -> bytes:
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", FORMAT_VERSION)
    _put_str(buf, model.kind)
    _put_str(buf, json.dumps(model.hyper.model_dump(), sort_keys=True))
    hashes = list(model.vocab_hashes)
    buf += struct.pack("<I", len(hashes))
    for h in hashes:
        _put_str(buf, h)
    state = model.state_dict()
    buf += struct.pack("<I", len(state))
    for name, tensor in state.items():
        array = tensor.detach().cpu().to(torch.float32).contiguous().numpy().astype("<f4", copy=False)
        _put_str(buf, name)
        buf += struct.pack("<I", array.ndim)
        buf += struct.pack(f"<{array.ndim}I", *array.shape)
        buf += array.tobytes()
    buf += hashlib.sha256(buf).digest()
    return bytes(buf)


def decode_checkpoint(
    data: bytes, expected_vocab_hashes: Optional[Sequence[str]] = None
) -> nn.Module:
    if len(data) < len(MAGIC) + DIGEST_SIZE or data[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint("not a checkpoint (bad magic)")
    body, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpoint("checkpoint hash mismatch (truncated or modified file)")

    reader = _Reader(body)
    reader.take(len(MAGIC))
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {version}")
    kind = reader.text()
    if kind not in MODEL_KINDS:
        raise CorruptCheckpoint(f"unknown model kind '{kind}'")
    hyper_cls, factory = MODEL_KINDS[kind]
    try:
        hyper = hyper_cls.model_validate(json.loads(reader.text()))
    except (ValueError, ValidationError) as exc:
        raise CorruptCheckpoint(f"bad hyper block: {exc}") from exc
    hashes = tuple(reader.text() for _ in range(reader.u32()))
    if expected_vocab_hashes is not None and tuple(expected_vocab_hashes) != hashes:
        raise CorruptCheckpoint("vocabulary hashes do not match the checkpoint")

    state: Dict[str, torch.Tensor] = {}
    for _ in range(reader.u32()):
        name = reader.text()
        ndim = reader.u32()
        shape = struct.unpack(f"<{ndim}I", reader.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        blob = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape)
        state[name] = torch.from_numpy(blob.astype(np.float32))
    if reader.offset != len(body):
        raise CorruptCheckpoint("trailing bytes after parameter blobs")

    model = factory(hyper, vocab_hashes=hashes)
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CorruptCheckpoint(f"parameters do not fit the model: {exc}") from exc
    model.eval()
    return model


def save_checkpoint(model: nn.Module, path: Path) -> None:
    ensure_dir(path.parent)
    try:
        path.write_bytes(encode_checkpoint(model))
    except OSError as exc:
        raise ArtifactWriteError(f"failed to write checkpoint {path}: {exc}") from exc
    logger.info("Saved %s checkpoint to %s", model.kind, path)


def load_checkpoint(path: Path, expected_vocab_hashes: Optional[Sequence[str]] = None) -> nn.Module:
    """Raises CorruptCheckpoint on bad magic, version, hash or vocabulary mismatch."""
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorpusReadError(f"failed to read checkpoint {path}: {exc}") from exc
    model = decode_checkpoint(data, expected_vocab_hashes)
    logger.debug("Loaded %s checkpoint from %s", model.kind, path)
    return model
