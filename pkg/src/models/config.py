# -*- coding: utf-8 -*-
"""
Configuración de los modelos (serializable en el checkpoint)
"""
from __future__ import annotations

from enum import Enum
from typing import Literal

from pydantic import BaseModel, Field, field_validator

from src.models.target_encoders import CAPTION_MODES, SENTIMENT_MODES, TargetMode

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3


class RetrievalMode(str, Enum):
    """Dónde se inyecta el target recuperado"""

    OFF = "off"
    M0_INIT = "m0_init"
    MULTI_ATTN = "multi_attn"
    COMBINED = "combined"

    @property
    def uses_memory_init(self) -> bool:
        return self in (RetrievalMode.M0_INIT, RetrievalMode.COMBINED)

    @property
    def uses_multi_attention(self) -> bool:
        return self in (RetrievalMode.MULTI_ATTN, RetrievalMode.COMBINED)

    @property
    def needs_store(self) -> bool:
        return self is not RetrievalMode.OFF


class _ModelConfig(BaseModel):
    vocab_size: int = Field(gt=4)
    embed_dim: int = Field(default=300, gt=0)
    hidden_dim: int = Field(default=512, gt=0)
    attn_dim: int = Field(default=512, gt=0)
    retrieval_mode: RetrievalMode = RetrievalMode.OFF
    encode_dim: int = Field(default=300, gt=0)
    dropout: float = Field(default=0.5, ge=0.0, lt=1.0)
    finetune_embeddings: bool = False
    projection_bias: bool = True
    seed: int = 0


class CaptionModelConfig(_ModelConfig):
    """Decoder de captions: features K x D_feat, h0/m0 desde la media de regiones"""

    task: Literal["caption"] = "caption"
    feature_dim: int = Field(default=2048, gt=0)
    regions: int = Field(default=49, gt=0)
    target_mode: TargetMode = TargetMode.WEIGHTED
    max_len: int = Field(default=20, ge=1)

    @field_validator("target_mode")
    @classmethod
    def _caption_mode(cls, v: TargetMode) -> TargetMode:
        if v not in CAPTION_MODES:
            raise ValueError(f"{v.value!r} is not a caption target mode")
        return v


class SentimentModelConfig(_ModelConfig):
    """Clasificador binario: h0 = m0 = 0 en el baseline"""

    task: Literal["sentiment"] = "sentiment"
    target_mode: TargetMode = TargetMode.CLASS_AVG

    @field_validator("target_mode")
    @classmethod
    def _sentiment_mode(cls, v: TargetMode) -> TargetMode:
        if v not in SENTIMENT_MODES:
            raise ValueError(f"{v.value!r} is not a sentiment target mode")
        return v
