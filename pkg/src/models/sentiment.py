# -*- coding: utf-8 -*-
"""
Clasificador de sentimiento: LSTM sobre la frase, atención sobre todos los
estados ocultos guiada por el último y capa sigmoide.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.autodiff.functional import (
    binary_cross_entropy,
    dense,
    dropout,
    embedding,
    lstm_cell,
    reshape,
    sigmoid,
    stack,
    where,
)
from src.autodiff.tensor import Tensor, no_grad
from src.models.attention import (
    AdditiveAttnParams,
    AttnTrace,
    MultiLevelAttnParams,
    sentiment_attention,
)
from src.models.config import RetrievalMode, SentimentModelConfig
from src.models.layers import StatefulModel, build_lstm_params, build_projection, init_embedding
from src.models.params import ModelParams
from src.models.target_encoders import Projection, TargetEncoder, project
from src.utils.exceptions import ConfigError, DimensionError

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass
class SentimentBatch:
    tokens: np.ndarray  # (B, T), relleno con PAD
    mask: np.ndarray  # (B, T)
    labels: np.ndarray  # (B,)
    retrieved: Optional[np.ndarray] = None  # (B, encode_dim)


@dataclass
class SentimentOutput:
    prob: Tensor
    alpha: Tensor
    alpha_hat: Optional[Tensor]


class SentimentModel(StatefulModel):
    """
    Baseline: h0 = m0 = 0. Con recuperación, m0 = r_yn (m0_init / combined)
    y/o atención multinivel entre el contexto y r_yn (multi_attn / combined).
    """

    task = "sentiment"

    def __init__(
        self,
        config: SentimentModelConfig,
        embedding_matrix: Optional[np.ndarray] = None,
        target_encoder: Optional[TargetEncoder] = None,
        itos: Optional[Sequence[str]] = None,
    ) -> None:
        self.config = config
        self.mode = RetrievalMode(config.retrieval_mode)
        rng = np.random.default_rng(config.seed)
        self.rng = np.random.default_rng(config.seed + 1)
        self.params = ModelParams(rng)
        self.target_encoder = target_encoder
        self.itos = list(itos) if itos is not None else None

        H, A = config.hidden_dim, config.attn_dim
        self.embedding = init_embedding(config, self.params, embedding_matrix, rng)
        self.lstm = build_lstm_params(self.params, "lstm", config.embed_dim, H)
        self.attention = AdditiveAttnParams.create(self.params, "attention", H, H, A)
        self.projection: Optional[Projection] = None
        if self.mode.needs_store:
            self.projection = build_projection(config, self.params)
        self.multi_attention: Optional[MultiLevelAttnParams] = None
        if self.mode.uses_multi_attention:
            self.multi_attention = MultiLevelAttnParams.create(
                self.params, "multi_attention", H, H, A
            )
        self.W_out = self.params.create("output.W", (1, H))
        self.b_out = self.params.create("output.b", (1,), fan_in=H)

    def retrieved_vector(self, f_yn) -> Optional[Tensor]:
        if not self.mode.needs_store:
            if f_yn is not None:
                raise ConfigError("retrieval mode 'off' takes no retrieved target")
            return None
        if f_yn is None:
            raise ConfigError(f"retrieval mode {self.mode.value!r} needs a retrieved target")
        return project(f_yn, self.projection)

    def forward(
        self,
        tokens: np.ndarray,
        mask: np.ndarray,
        f_yn: Optional[np.ndarray] = None,
        training: bool = False,
    ) -> SentimentOutput:
        """Probabilidad positiva por ejemplo; ``tokens`` y ``mask`` son (B, T)"""
        tokens = np.asarray(tokens, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
        if tokens.ndim != 2 or tokens.shape[1] == 0:
            raise DimensionError(f"token batch must be (B, T) with T >= 1, got {tokens.shape}")
        if mask.shape != tokens.shape:
            raise DimensionError(f"mask shape {mask.shape} differs from tokens {tokens.shape}")
        if not mask.any(axis=1).all():
            raise DimensionError("every sentence needs at least one token")

        r_yn = self.retrieved_vector(f_yn)
        B, T, H = tokens.shape[0], tokens.shape[1], self.config.hidden_dim
        h = Tensor(np.zeros((B, H)))
        m = r_yn if self.mode.uses_memory_init else Tensor(np.zeros((B, H)))

        hidden = []
        for t in range(T):
            h_new, m_new = lstm_cell(embedding(self.embedding, tokens[:, t]), h, m, self.lstm)
            keep = mask[:, t : t + 1]
            h, m = where(keep, h_new, h), where(keep, m_new, m)
            hidden.append(h)
        H_all = stack(hidden, axis=1)
        context, alpha, alpha_hat = sentiment_attention(
            H_all, h, r_yn, self.attention, self.multi_attention, mask=mask
        )
        logit = dense(dropout(context, self.config.dropout, training, self.rng), self.W_out, self.b_out)
        prob = sigmoid(reshape(logit, (B,)))
        return SentimentOutput(prob=prob, alpha=alpha, alpha_hat=alpha_hat)

    def loss(self, batch: SentimentBatch, training: bool = True) -> Tensor:
        out = self.forward(batch.tokens, batch.mask, batch.retrieved, training)
        return binary_cross_entropy(out.prob, batch.labels)

    def sentiment_forward(
        self, tokens: Sequence[int], f_yn: Optional[np.ndarray] = None
    ) -> Tuple[float, AttnTrace]:
        """Un ejemplo sin gradientes: probabilidad positiva y pesos sobre los estados"""
        if len(tokens) == 0:
            raise DimensionError("token sequence must not be empty")
        ids = np.asarray(tokens, dtype=np.int64)[None, :]
        f_batch = None if f_yn is None else np.asarray(f_yn, dtype=np.float64)[None, :]
        with no_grad():
            out = self.forward(ids, np.ones_like(ids, dtype=bool), f_batch)
        prob = float(out.prob.data[0])
        trace = AttnTrace()
        trace.append(
            POSITIVE if prob >= 0.5 else NEGATIVE,
            out.alpha.data[0],
            None if out.alpha_hat is None else out.alpha_hat.data[0],
        )
        return prob, trace

    def predict(self, tokens: np.ndarray, mask: np.ndarray, f_yn: Optional[np.ndarray] = None) -> np.ndarray:
        with no_grad():
            out = self.forward(tokens, mask, f_yn)
        return (out.prob.data >= 0.5).astype(np.int64)
