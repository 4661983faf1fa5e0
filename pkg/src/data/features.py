# -*- coding: utf-8 -*-
"""
Archivos de features por imagen: magic "RAFX", u32 K, u32 D y K*D f32 little-endian.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from src.utils.atomic import atomic_write_bytes
from src.utils.exceptions import DimensionError, FormatError

MAGIC = b"RAFX"
_HEADER = struct.Struct("<II")
HEADER_SIZE = len(MAGIC) + _HEADER.size


def encode_features(regions: np.ndarray) -> bytes:
    regions = np.asarray(regions)
    if regions.ndim != 2 or 0 in regions.shape:
        raise DimensionError(f"region features must be a non-empty K x D matrix, got {regions.shape}")
    K, D = regions.shape
    return MAGIC + _HEADER.pack(K, D) + np.ascontiguousarray(regions, dtype="<f4").tobytes()


def decode_features(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < HEADER_SIZE or raw[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{source}: not a feature file (bad magic)")
    K, D = _HEADER.unpack_from(raw, len(MAGIC))
    if K == 0 or D == 0:
        raise FormatError(f"{source}: empty feature matrix (K={K}, D={D})")
    expected = HEADER_SIZE + 4 * K * D
    if len(raw) != expected:
        raise FormatError(f"{source}: expected {expected} bytes for K={K}, D={D}, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).reshape(K, D).astype(np.float32)


def write_features(path: Union[str, Path], regions: np.ndarray) -> Path:
    return atomic_write_bytes(path, encode_features(regions))


def read_features(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"feature file not found: {path}")
    return decode_features(path.read_bytes(), str(path))


def pooled(regions: np.ndarray) -> np.ndarray:
    """Media global de las regiones, v_bar = (1/K) sum v_i, en f64"""
    return np.asarray(regions, dtype=np.float64).mean(axis=-2)
