# -*- coding: utf-8 -*-
"""
Representación de longitud fija f(y_n) del target recuperado y su proyección
a la dimensión de la LSTM: r_{y_n} = W_n f(y_n) (+ b_n).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff.functional import dense
from src.autodiff.tensor import Tensor
from src.models.embeddings import ContextualEmbeddings, EmbeddingTable
from src.storage.example_store import TargetPayload
from src.utils.exceptions import (
    ConfigError,
    DatasetError,
    DimensionError,
    InvalidTargetError,
    MissingEmbeddingError,
    NumericalError,
)
from src.utils.logger import setup_logger

logger = setup_logger()


class TargetMode(str, Enum):
    """Representaciones del target recuperado"""

    AVG = "avg"
    WEIGHTED = "weighted"
    CONTEXTUAL = "contextual"
    PLUSMINUS = "plusminus"
    CLASS_AVG = "class_avg"
    CLASS_WEIGHTED = "class_weighted"
    CLASS_CONTEXTUAL = "class_contextual"


CAPTION_MODES = frozenset({TargetMode.AVG, TargetMode.WEIGHTED, TargetMode.CONTEXTUAL})
SENTIMENT_MODES = frozenset(
    {
        TargetMode.PLUSMINUS,
        TargetMode.CLASS_AVG,
        TargetMode.CLASS_WEIGHTED,
        TargetMode.CLASS_CONTEXTUAL,
    }
)


@dataclass(frozen=True)
class TargetEncoderConfig:
    mode: TargetMode
    lstm_dim: int

    def validate_for(self, task: str) -> "TargetEncoderConfig":
        allowed = CAPTION_MODES if task == "caption" else SENTIMENT_MODES
        if TargetMode(self.mode) not in allowed:
            names = sorted(m.value for m in allowed)
            raise ConfigError(f"target mode {self.mode!r} is not valid for task {task!r}; use {names}")
        if self.lstm_dim < 1:
            raise ConfigError(f"lstm_dim must be positive, got {self.lstm_dim}")
        return self


# ======= REPRESENTACIONES DE CAPTIONS =======


def _known_vectors(tokens: Sequence[str], table: EmbeddingTable) -> List[np.ndarray]:
    vectors = [table.get(t) for t in tokens]
    known = [v for v in vectors if v is not None]
    if not known:
        raise MissingEmbeddingError("no in-vocabulary tokens to encode")
    return known


def avg_embedding(tokens: Sequence[str], table: EmbeddingTable) -> np.ndarray:
    """Media aritmética de los vectores conocidos; los OOV se omiten"""
    known = _known_vectors(tokens, table)
    return np.mean(np.stack(known), axis=0)


def norm_weighted_avg(tokens: Sequence[str], table: EmbeddingTable) -> np.ndarray:
    """Media ponderada por la norma L2 de cada vector"""
    known = np.stack(_known_vectors(tokens, table))
    weights = np.linalg.norm(known, axis=1)
    total = weights.sum()
    if total == 0.0:
        raise NumericalError("all token vectors are zero; weighted average undefined")
    return (weights[:, None] * known).sum(axis=0) / total


def contextual_embedding(example_id: int, embeddings: ContextualEmbeddings) -> np.ndarray:
    """Vector contextual precomputado del ejemplo, sin transformar"""
    return embeddings.get(example_id)


# ======= REPRESENTACIONES DE SENTIMIENTO =======


@dataclass(frozen=True)
class SentimentSample:
    example_id: int
    tokens: Tuple[str, ...]
    label: int


@dataclass
class ClassMeans:
    """Media por clase de las representaciones por frase (solo split de train)"""

    negative: np.ndarray
    positive: np.ndarray

    def for_label(self, label: int) -> np.ndarray:
        return self.positive if label == 1 else self.negative

    @classmethod
    def fit(
        cls,
        corpus: Sequence[SentimentSample],
        mode: TargetMode,
        table: Optional[EmbeddingTable] = None,
        contextual: Optional[ContextualEmbeddings] = None,
    ) -> "ClassMeans":
        mode = TargetMode(mode)
        sentence_encoder: Callable[[SentimentSample], np.ndarray]
        if mode is TargetMode.CLASS_AVG:
            _require(table, "class_avg needs an embedding table")
            sentence_encoder = lambda s: avg_embedding(s.tokens, table)  # noqa: E731
        elif mode is TargetMode.CLASS_WEIGHTED:
            _require(table, "class_weighted needs an embedding table")
            sentence_encoder = lambda s: norm_weighted_avg(s.tokens, table)  # noqa: E731
        elif mode is TargetMode.CLASS_CONTEXTUAL:
            _require(contextual, "class_contextual needs precomputed sentence embeddings")
            sentence_encoder = lambda s: contextual_embedding(s.example_id, contextual)  # noqa: E731
        else:
            raise ConfigError(f"class means are not defined for mode {mode.value!r}")

        per_class: Dict[int, List[np.ndarray]] = {0: [], 1: []}
        skipped = 0
        for sample in corpus:
            try:
                per_class[sample.label].append(sentence_encoder(sample))
            except (MissingEmbeddingError, NumericalError):
                skipped += 1
        if skipped:
            logger.warning(f"Skipped {skipped} sentences without usable embeddings")
        for label, vectors in per_class.items():
            if not vectors:
                raise DatasetError(f"no training sentences with label {label} to build the class mean")
        logger.info(
            f"Class means fitted ({mode.value}): {len(per_class[1])} positive, "
            f"{len(per_class[0])} negative sentences"
        )
        return cls(
            negative=np.mean(np.stack(per_class[0]), axis=0),
            positive=np.mean(np.stack(per_class[1]), axis=0),
        )


def _require(resource, message: str) -> None:
    if resource is None:
        raise ConfigError(message)


def sentiment_encoding(
    label: int, cfg: TargetEncoderConfig, class_means: Optional[ClassMeans] = None
) -> np.ndarray:
    """Vector de 1s / -1s o la media de clase correspondiente"""
    if label not in (0, 1):
        raise InvalidTargetError(f"sentiment label must be 0 or 1, got {label}")
    mode = TargetMode(cfg.mode)
    if mode is TargetMode.PLUSMINUS:
        return np.full(cfg.lstm_dim, 1.0 if label == 1 else -1.0)
    if mode not in SENTIMENT_MODES:
        raise ConfigError(f"mode {mode.value!r} is not a sentiment encoding")
    _require(class_means, f"{mode.value} needs class means fitted on the training split")
    return class_means.for_label(label)


# ======= PROYECCIÓN =======


@dataclass
class Projection:
    """``W_n`` (lstm_dim x encode_dim) y sesgo opcional ``b_n`` (lstm_dim)"""

    W_n: Tensor
    b_n: Optional[Tensor] = None

    def __post_init__(self) -> None:
        if self.W_n.ndim != 2:
            raise DimensionError(f"W_n must be a matrix, got shape {self.W_n.shape}")
        if self.b_n is not None and self.b_n.shape != (self.W_n.shape[0],):
            raise DimensionError(
                f"b_n shape {self.b_n.shape} does not conform to W_n shape {self.W_n.shape}"
            )

    @property
    def lstm_dim(self) -> int:
        return self.W_n.shape[0]

    @property
    def encode_dim(self) -> int:
        return self.W_n.shape[1]


def project(f_yn, proj: Projection) -> Tensor:
    """r_{y_n} = W_n f(y_n) (+ b_n); diferenciable a través de la cinta"""
    return dense(f_yn, proj.W_n, proj.b_n)


# ======= ENCODER COMPLETO =======


class TargetEncoder:
    """Traduce un ``TargetPayload`` recuperado a f(y_n) según el modo configurado"""

    def __init__(
        self,
        cfg: TargetEncoderConfig,
        table: Optional[EmbeddingTable] = None,
        contextual: Optional[ContextualEmbeddings] = None,
        class_means: Optional[ClassMeans] = None,
        itos: Optional[Sequence[str]] = None,
    ) -> None:
        self.cfg = cfg
        self.table = table
        self.contextual = contextual
        self.class_means = class_means
        self.itos = list(itos) if itos is not None else None
        mode = TargetMode(cfg.mode)
        if mode in (TargetMode.AVG, TargetMode.WEIGHTED):
            _require(table, f"{mode.value} encoding needs an embedding table")
            _require(self.itos, f"{mode.value} encoding needs the vocabulary to decode captions")
        if mode is TargetMode.CONTEXTUAL:
            _require(contextual, "contextual encoding needs precomputed caption embeddings")
        if mode in (TargetMode.CLASS_AVG, TargetMode.CLASS_WEIGHTED, TargetMode.CLASS_CONTEXTUAL):
            _require(class_means, f"{mode.value} encoding needs fitted class means")

    @property
    def encode_dim(self) -> int:
        mode = TargetMode(self.cfg.mode)
        if mode in (TargetMode.AVG, TargetMode.WEIGHTED):
            return self.table.dim
        if mode is TargetMode.CONTEXTUAL:
            return self.contextual.dim
        if mode is TargetMode.PLUSMINUS:
            return self.cfg.lstm_dim
        return int(self.class_means.positive.shape[0])

    def decode(self, token_ids: Sequence[int]) -> List[str]:
        return [self.itos[i] for i in token_ids]

    def encode(self, payload: TargetPayload, example_id: Optional[int] = None) -> np.ndarray:
        """f(y_n) del payload; ``example_id`` es el id del vecino (modo contextual)"""
        mode = TargetMode(self.cfg.mode)
        if mode in CAPTION_MODES:
            if payload.caption is None:
                raise ConfigError(f"mode {mode.value!r} expects a caption payload")
            if mode is TargetMode.CONTEXTUAL:
                if example_id is None:
                    raise ConfigError("contextual encoding needs the retrieved example id")
                return contextual_embedding(example_id, self.contextual)
            tokens = self.decode(payload.caption)
            if mode is TargetMode.AVG:
                return avg_embedding(tokens, self.table)
            return norm_weighted_avg(tokens, self.table)
        if payload.label is None:
            raise ConfigError(f"mode {mode.value!r} expects a label payload")
        return sentiment_encoding(payload.label, self.cfg, self.class_means)
