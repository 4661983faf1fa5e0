# -*- coding: utf-8 -*-
"""
Checkpoints de modelo: magic "RAFM", versión, bloque JSON con la
configuración y tensores nombrados en f64 little-endian.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
from pydantic import ValidationError

from src.models.captioning import CaptionModel
from src.models.config import CaptionModelConfig, SentimentModelConfig
from src.models.sentiment import SentimentModel
from src.utils.atomic import atomic_write_bytes
from src.utils.exceptions import CheckpointError, FormatError
from src.utils.logger import setup_logger

logger = setup_logger()

MAGIC = b"RAFM"
VERSION = 1
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")

Model = Union[CaptionModel, SentimentModel]


@dataclass
class Checkpoint:
    config: Union[CaptionModelConfig, SentimentModelConfig]
    tensors: Dict[str, np.ndarray]
    meta: Dict[str, Any] = field(default_factory=dict)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = json.dumps(
        {"model": ckpt.config.model_dump(mode="json"), "meta": ckpt.meta},
        sort_keys=True,
    ).encode("utf-8")
    parts = [MAGIC, _U16.pack(VERSION), _U32.pack(len(header)), header, _U32.pack(len(ckpt.tensors))]
    for name, array in ckpt.tensors.items():
        raw_name = name.encode("utf-8")
        array = np.ascontiguousarray(array, dtype="<f8")
        parts.append(_U16.pack(len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes())
    return b"".join(parts)


def _parse_config(block: Dict[str, Any]):
    task = block.get("task")
    try:
        if task == "caption":
            return CaptionModelConfig.model_validate(block)
        if task == "sentiment":
            return SentimentModelConfig.model_validate(block)
    except ValidationError as e:
        raise FormatError(f"checkpoint holds an invalid model config: {e}") from e
    raise FormatError(f"checkpoint has unknown task {task!r}")


def decode_checkpoint(raw: bytes) -> Checkpoint:
    if raw[: len(MAGIC)] != MAGIC:
        raise FormatError("not a model checkpoint (bad magic)")
    try:
        offset = len(MAGIC)
        (version,) = _U16.unpack_from(raw, offset)
        offset += _U16.size
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        (header_len,) = _U32.unpack_from(raw, offset)
        offset += _U32.size
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
        offset += header_len
        (count,) = _U32.unpack_from(raw, offset)
        offset += _U32.size

        tensors: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = _U16.unpack_from(raw, offset)
            offset += _U16.size
            name = raw[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", raw, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, offset)
            offset += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if len(raw) < offset + 8 * size:
                raise FormatError(f"checkpoint truncated in tensor {name!r}")
            data = np.frombuffer(raw, dtype="<f8", count=size, offset=offset)
            tensors[name] = data.reshape(shape).astype(np.float64)
            offset += 8 * size
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"corrupt checkpoint: {e}") from e
    if offset != len(raw):
        raise FormatError(f"checkpoint has {len(raw) - offset} trailing bytes")
    return Checkpoint(config=_parse_config(header["model"]), tensors=tensors, meta=header.get("meta", {}))


def save_checkpoint(model: Model, path: Union[str, Path], meta: Optional[Dict[str, Any]] = None) -> Path:
    ckpt = Checkpoint(config=model.config, tensors=model.state_dict(), meta=dict(meta or {}))
    return atomic_write_bytes(path, encode_checkpoint(ckpt))


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def build_model(config, embedding_matrix=None, target_encoder=None, itos=None) -> Model:
    if config.task == "caption":
        return CaptionModel(config, embedding_matrix, target_encoder, itos)
    return SentimentModel(config, embedding_matrix, target_encoder, itos)


def restore_model(path: Union[str, Path], target_encoder=None, itos=None) -> Model:
    """Reconstruye el modelo con los pesos exactos del checkpoint"""
    ckpt = load_checkpoint(path)
    model = build_model(ckpt.config, target_encoder=target_encoder, itos=itos)
    model.load_state_dict(ckpt.tensors)
    logger.info(
        f"Restored {ckpt.config.task} model ({ckpt.config.retrieval_mode.value}) "
        f"with {model.params.count()} trainable values from {path}"
    )
    return model
