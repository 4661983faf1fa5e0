# -*- coding: utf-8 -*-
"""
Índice exacto (búsqueda plana) de representaciones de entrada del conjunto de
entrenamiento, con tabla auxiliar id -> target.
"""
from __future__ import annotations

import heapq
import struct
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import settings
from src.utils.atomic import atomic_write_bytes
from src.utils.exceptions import (
    ConfigError,
    DimensionError,
    DuplicateIdError,
    EmptyStoreError,
    FormatError,
    InvalidTargetError,
    StoreError,
)
from src.utils.logger import setup_logger
from src.utils.metrics import timed

logger = setup_logger()

MAGIC = b"RKNN"
VERSION = 1
_HEADER = struct.Struct("<HBIQ")
_U64 = struct.Struct("<Q")
_TARGET_HEAD = struct.Struct("<QB")
_U32 = struct.Struct("<I")

KIND_CAPTION = 0
KIND_LABEL = 1


class Metric(str, Enum):
    """Métrica de búsqueda: L2 (por defecto) o producto interno"""

    L2 = "l2"
    INNER_PRODUCT = "ip"

    @property
    def code(self) -> int:
        return 0 if self is Metric.L2 else 1

    @classmethod
    def from_code(cls, code: int) -> "Metric":
        if code == 0:
            return cls.L2
        if code == 1:
            return cls.INNER_PRODUCT
        raise FormatError(f"unknown metric code {code}")


@dataclass(frozen=True)
class TargetPayload:
    """Target de un ejemplo: primer caption (ids de tokens) o etiqueta 0/1"""

    caption: Optional[Tuple[int, ...]] = None
    label: Optional[int] = None

    def __post_init__(self) -> None:
        if (self.caption is None) == (self.label is None):
            raise InvalidTargetError("TargetPayload holds exactly one of caption or label")
        if self.caption is not None and len(self.caption) == 0:
            raise InvalidTargetError("caption payload must be non-empty")
        if self.label is not None and self.label not in (0, 1):
            raise InvalidTargetError(f"label payload must be 0 or 1, got {self.label}")

    @classmethod
    def of_caption(cls, tokens: Sequence[int]) -> "TargetPayload":
        return cls(caption=tuple(int(t) for t in tokens))

    @classmethod
    def of_label(cls, label: int) -> "TargetPayload":
        return cls(label=int(label))

    @property
    def kind(self) -> int:
        return KIND_CAPTION if self.caption is not None else KIND_LABEL


@dataclass(frozen=True)
class RetrievalHit:
    id: int
    distance: float


class ExampleStore:
    """
    Índice plano exacto.

    Los vectores se guardan en float32 (igual que en disco); las consultas se
    cuantizan a float32 y las distancias se calculan en float64. Tras ``freeze()``
    el índice es inmutable y admite búsquedas concurrentes.
    """

    def __init__(self, dim: int, metric: Union[Metric, str] = Metric.L2) -> None:
        if dim < 1:
            raise ConfigError(f"store dimension must be positive, got {dim}")
        self.dim = int(dim)
        self.metric = Metric(metric)
        self._vectors = np.zeros((16, self.dim), dtype=np.float32)
        self._ids: List[int] = []
        self._rows: Dict[int, int] = {}
        self._targets: Dict[int, TargetPayload] = {}
        self._id_array: Optional[np.ndarray] = None
        self._frozen = False
        self._lock = threading.Lock()

    # ======= MUTACIÓN =======

    def add(self, example_id: int, vector: Sequence[float], target: TargetPayload) -> None:
        """Agrega un vector y su target; ids duplicados o dimensión incorrecta fallan"""
        if self._frozen:
            raise StoreError("store is frozen; no further additions allowed")
        example_id = int(example_id)
        vec = np.asarray(vector, dtype=np.float32).reshape(-1)
        if vec.shape[0] != self.dim:
            raise DimensionError(
                f"vector of dimension {vec.shape[0]} does not match store dimension {self.dim}"
            )
        if example_id in self._rows:
            raise DuplicateIdError(f"id {example_id} already present in store")
        with self._lock:
            n = len(self._ids)
            if n == self._vectors.shape[0]:
                grown = np.zeros((2 * n, self.dim), dtype=np.float32)
                grown[:n] = self._vectors
                self._vectors = grown
            self._vectors[n] = vec
            self._ids.append(example_id)
            self._rows[example_id] = n
            self._targets[example_id] = target
            self._id_array = None

    def freeze(self) -> "ExampleStore":
        self._vectors = np.ascontiguousarray(self._vectors[: len(self._ids)])
        self._id_array = np.asarray(self._ids, dtype=np.int64)
        self._frozen = True
        logger.info(f"Store frozen with {len(self._ids)} vectors (dim={self.dim})")
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def count(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> List[int]:
        return list(self._ids)

    def vector(self, example_id: int) -> np.ndarray:
        return self._vectors[self._rows[int(example_id)]].copy()

    def target(self, example_id: int) -> TargetPayload:
        return self._targets[int(example_id)]

    # ======= BÚSQUEDA =======

    def _ids_view(self) -> np.ndarray:
        if self._id_array is None:
            self._id_array = np.asarray(self._ids, dtype=np.int64)
        return self._id_array

    def search(
        self,
        query: Sequence[float],
        k: int = 1,
        exclude: Iterable[int] = (),
    ) -> List[RetrievalHit]:
        """k vecinos exactos en orden ascendente de distancia; empates por id menor"""
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        q = np.asarray(query, dtype=np.float32).reshape(-1).astype(np.float64)
        if q.shape[0] != self.dim:
            raise DimensionError(
                f"query of dimension {q.shape[0]} does not match store dimension {self.dim}"
            )
        n = len(self._ids)
        ids = self._ids_view()
        excluded = {int(e) for e in exclude}
        keep_mask = None
        if excluded:
            keep_mask = ~np.isin(ids, np.fromiter(excluded, dtype=np.int64))
            available = int(keep_mask.sum())
        else:
            available = n
        if available == 0:
            raise EmptyStoreError("no candidates left in store after exclusion")

        block = max(int(settings.search_block_size), 1)
        best: List[Tuple[float, int]] = []
        with timed("search", settings.search_sla_ms):
            for start in range(0, n, block):
                stop = min(start + block, n)
                rows = self._vectors[start:stop].astype(np.float64)
                if self.metric is Metric.L2:
                    diff = rows - q
                    dist = np.einsum("ij,ij->i", diff, diff)
                else:
                    dist = -(rows @ q)
                block_ids = ids[start:stop]
                if keep_mask is not None:
                    sel = keep_mask[start:stop]
                    dist, block_ids = dist[sel], block_ids[sel]
                if dist.size == 0:
                    continue
                order = np.lexsort((block_ids, dist))[:k]
                best.extend(zip(dist[order].tolist(), block_ids[order].tolist()))
                best = heapq.nsmallest(k, best)
        return [RetrievalHit(id=int(i), distance=float(d)) for d, i in best]

    def nearest(
        self, query: Sequence[float], exclude: Iterable[int] = ()
    ) -> Tuple[RetrievalHit, TargetPayload]:
        hit = self.search(query, k=1, exclude=exclude)[0]
        return hit, self._targets[hit.id]

    def nearest_target(self, query: Sequence[float], exclude: Iterable[int] = ()) -> TargetPayload:
        """Target del vecino más cercano (búsqueda k=1 + tabla auxiliar)"""
        return self.nearest(query, exclude)[1]

    # ======= PERSISTENCIA =======

    def to_bytes(self) -> bytes:
        n = len(self._ids)
        parts = [MAGIC, _HEADER.pack(VERSION, self.metric.code, self.dim, n)]
        records = np.zeros(n, dtype=[("id", "<u8"), ("vec", "<f4", (self.dim,))])
        records["id"] = np.asarray(self._ids, dtype=np.uint64)
        records["vec"] = self._vectors[:n]
        parts.append(records.tobytes())
        parts.append(_U64.pack(n))
        for example_id in self._ids:
            payload = self._targets[example_id]
            parts.append(_TARGET_HEAD.pack(example_id, payload.kind))
            if payload.caption is not None:
                parts.append(_U32.pack(len(payload.caption)))
                parts.append(np.asarray(payload.caption, dtype="<u4").tobytes())
            else:
                parts.append(struct.pack("<B", payload.label))
        return b"".join(parts)

    def save(self, path: Union[str, Path]) -> Path:
        path = atomic_write_bytes(path, self.to_bytes())
        logger.info(f"Saved store with {len(self)} vectors to {path}")
        return path

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ExampleStore":
        head = len(MAGIC) + _HEADER.size
        if len(raw) < head or raw[: len(MAGIC)] != MAGIC:
            raise FormatError("not an example-store file (bad magic)")
        version, metric_code, dim, n = _HEADER.unpack_from(raw, len(MAGIC))
        if version != VERSION:
            raise FormatError(f"unsupported store version {version}")
        store = cls(dim, Metric.from_code(metric_code))
        record_dtype = np.dtype([("id", "<u8"), ("vec", "<f4", (dim,))])
        offset = head
        end = offset + record_dtype.itemsize * n
        if len(raw) < end + _U64.size:
            raise FormatError("store file truncated in vector section")
        records = np.frombuffer(raw, dtype=record_dtype, count=n, offset=offset)
        offset = end
        (target_count,) = _U64.unpack_from(raw, offset)
        offset += _U64.size
        if target_count != n:
            raise FormatError(f"target section holds {target_count} entries, expected {n}")

        targets: Dict[int, TargetPayload] = {}
        try:
            for _ in range(target_count):
                example_id, kind = _TARGET_HEAD.unpack_from(raw, offset)
                offset += _TARGET_HEAD.size
                if kind == KIND_CAPTION:
                    (length,) = _U32.unpack_from(raw, offset)
                    offset += _U32.size
                    if len(raw) < offset + 4 * length:
                        raise FormatError("store file truncated in caption payload")
                    tokens = np.frombuffer(raw, dtype="<u4", count=length, offset=offset)
                    offset += 4 * length
                    targets[example_id] = TargetPayload.of_caption(tokens.tolist())
                elif kind == KIND_LABEL:
                    (label,) = struct.unpack_from("<B", raw, offset)
                    offset += 1
                    targets[example_id] = TargetPayload.of_label(label)
                else:
                    raise FormatError(f"unknown target kind {kind}")
        except struct.error as e:
            raise FormatError(f"store file truncated in target section: {e}") from e
        except ValueError as e:
            raise FormatError(f"invalid target payload: {e}") from e

        for record in records:
            example_id = int(record["id"])
            if example_id not in targets:
                raise FormatError(f"id {example_id} has no target payload")
            store.add(example_id, record["vec"], targets[example_id])
        return store

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExampleStore":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"store file not found: {path}")
        store = cls.from_bytes(path.read_bytes())
        logger.info(f"Loaded store with {len(store)} vectors (dim={store.dim}) from {path}")
        return store
