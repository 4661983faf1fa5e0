# -*- coding: utf-8 -*-
"""
Decoder de captions con atención (baseline) y su variante con recuperación:
m0 inicializado con el target recuperado y/o atención multinivel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff.functional import (
    concat,
    cross_entropy,
    dense,
    dropout,
    embedding,
    lstm_cell,
    scale,
    sum_tensors,
)
from src.autodiff.tensor import Tensor, no_grad
from src.models.attention import (
    AdditiveAttnParams,
    AttnTrace,
    MultiLevelAttnParams,
    additive_attention,
    multi_level_attention,
)
from src.models.config import BOS_ID, EOS_ID, CaptionModelConfig, RetrievalMode
from src.models.layers import StatefulModel, build_lstm_params, build_projection, init_embedding
from src.models.params import ModelParams
from src.models.target_encoders import Projection, TargetEncoder, project
from src.storage.example_store import TargetPayload
from src.utils.exceptions import ConfigError


@dataclass
class DecodeState:
    """Estado del decoder: h, m, índice de paso y tokens emitidos"""

    h: Tensor
    m: Tensor
    step: int = 0
    tokens: List[int] = field(default_factory=list)


@dataclass
class CaptionBatch:
    """Batch con teacher forcing: entradas [BOS]+caption, objetivos caption+[EOS]"""

    features: np.ndarray  # (B, K, D_feat)
    v_bar: np.ndarray  # (B, D_feat)
    inputs: np.ndarray  # (B, T)
    targets: np.ndarray  # (B, T)
    mask: np.ndarray  # (B, T)
    retrieved: Optional[np.ndarray] = None  # (B, encode_dim)


class CaptionModel(StatefulModel):
    """
    Decoder LSTM con atención aditiva sobre regiones proyectadas.

    - h0 = W_ih v_bar + b; m0 = W_im v_bar + b (baseline / multi_attn) o
      r_yn = W_n f(y_n) + b_n (m0_init / combined).
    - Entrada por paso: concat(embedding de la palabra, contexto).
    - Logits: dropout -> capa afín sobre h_t.
    """

    task = "caption"

    def __init__(
        self,
        config: CaptionModelConfig,
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

        H, A, D_feat = config.hidden_dim, config.attn_dim, config.feature_dim
        self.embedding = init_embedding(config, self.params, embedding_matrix, rng)
        self.W_feat = self.params.create("features.W", (H, D_feat))
        self.b_feat = self.params.create("features.b", (H,), fan_in=D_feat)
        self.W_ih = self.params.create("init.W_ih", (H, D_feat))
        self.b_ih = self.params.create("init.b_ih", (H,), fan_in=D_feat)
        self.W_im: Optional[Tensor] = None
        self.b_im: Optional[Tensor] = None
        if not self.mode.uses_memory_init:
            self.W_im = self.params.create("init.W_im", (H, D_feat))
            self.b_im = self.params.create("init.b_im", (H,), fan_in=D_feat)
        self.attention = AdditiveAttnParams.create(self.params, "attention", H, H, A)
        self.projection: Optional[Projection] = None
        if self.mode.needs_store:
            self.projection = build_projection(config, self.params)
        self.multi_attention: Optional[MultiLevelAttnParams] = None
        if self.mode.uses_multi_attention:
            self.multi_attention = MultiLevelAttnParams.create(
                self.params, "multi_attention", H, H, A
            )
        self.lstm = build_lstm_params(self.params, "lstm", config.embed_dim + H, H)
        self.W_out = self.params.create("output.W", (config.vocab_size, H))
        self.b_out = self.params.create("output.b", (config.vocab_size,), fan_in=H)

    # ======= PIEZAS DEL GRAFO =======

    def retrieved_vector(self, f_yn) -> Optional[Tensor]:
        """r_yn por proyección del target codificado (una vez por ejemplo)"""
        if f_yn is None:
            return None
        if self.projection is None:
            raise ConfigError("retrieval mode 'off' takes no retrieved target")
        return project(f_yn, self.projection)

    def project_features(self, V) -> Tensor:
        return dense(V, self.W_feat, self.b_feat)

    def init_states(self, v_bar, r_yn: Optional[Tensor] = None) -> DecodeState:
        """h0 desde v_bar; m0 = r_yn en m0_init / combined, si no desde v_bar"""
        if self.mode.uses_memory_init and r_yn is None:
            raise ConfigError(f"retrieval mode {self.mode.value!r} needs a retrieved target")
        if not self.mode.needs_store and r_yn is not None:
            raise ConfigError("retrieval mode 'off' takes no retrieved target")
        h0 = dense(v_bar, self.W_ih, self.b_ih)
        if self.mode.uses_memory_init:
            m0 = r_yn
        else:
            m0 = dense(v_bar, self.W_im, self.b_im)
        return DecodeState(h=h0, m=m0)

    def caption_init_states(
        self,
        v_bar,
        retrieved: Optional[TargetPayload] = None,
        neighbor_id: Optional[int] = None,
    ) -> Tuple[DecodeState, Optional[Tensor]]:
        """
        Estados iniciales a partir del payload recuperado, codificado y proyectado.

        El payload es obligatorio en m0_init / combined y opcional en multi_attn,
        donde no toca los estados pero el ``r_yn`` devuelto alimenta cada paso.
        """
        if retrieved is None and self.mode.uses_memory_init:
            raise ConfigError(f"retrieval mode {self.mode.value!r} needs a retrieved target")
        if retrieved is not None and not self.mode.needs_store:
            raise ConfigError("retrieval mode 'off' takes no retrieved target")
        r_yn = None
        if retrieved is not None:
            if self.target_encoder is None:
                raise ConfigError("model has no target encoder attached")
            r_yn = self.retrieved_vector(self.target_encoder.encode(retrieved, neighbor_id))
        return self.init_states(v_bar, r_yn), r_yn

    def step(
        self,
        state: DecodeState,
        words,
        V_proj: Tensor,
        r_yn: Optional[Tensor] = None,
        training: bool = False,
    ) -> Tuple[Tensor, DecodeState, Tuple[Tensor, Optional[Tensor]]]:
        """Un paso del decoder; devuelve (logits, nuevo estado, (alpha, alpha_hat))"""
        if self.mode.uses_multi_attention and r_yn is None:
            raise ConfigError("multi-level attention needs the retrieved vector")
        context, alpha = additive_attention(V_proj, state.h, self.attention)
        alpha_hat = None
        if self.mode.uses_multi_attention:
            context, alpha_hat = multi_level_attention(context, r_yn, state.h, self.multi_attention)
        x_t = concat([embedding(self.embedding, np.asarray(words)), context], axis=-1)
        h, m = lstm_cell(x_t, state.h, state.m, self.lstm)
        logits = dense(dropout(h, self.config.dropout, training, self.rng), self.W_out, self.b_out)
        new_state = DecodeState(h=h, m=m, step=state.step + 1, tokens=list(state.tokens))
        return logits, new_state, (alpha, alpha_hat)

    # ======= ENTRENAMIENTO =======

    def loss(self, batch: CaptionBatch, training: bool = True) -> Tensor:
        """Entropía cruzada media por token con teacher forcing"""
        V_proj = self.project_features(batch.features)
        r_yn = self.retrieved_vector(batch.retrieved) if self.mode.needs_store else None
        state = self.init_states(batch.v_bar, r_yn)
        losses = []
        for t in range(batch.inputs.shape[1]):
            logits, state, _ = self.step(state, batch.inputs[:, t], V_proj, r_yn, training)
            losses.append(cross_entropy(logits, batch.targets[:, t], batch.mask[:, t], "sum"))
        return scale(sum_tensors(losses), 1.0 / max(float(batch.mask.sum()), 1.0))

    # ======= INFERENCIA =======

    def token_text(self, token_id: int) -> str:
        if self.itos is not None and 0 <= token_id < len(self.itos):
            return self.itos[token_id]
        return str(token_id)

    def greedy_decode(
        self,
        features: np.ndarray,
        f_yn: Optional[np.ndarray] = None,
        max_len: Optional[int] = None,
    ) -> Tuple[List[int], AttnTrace]:
        """Decodificación voraz desde BOS hasta EOS o ``max_len``; empates por id menor"""
        max_len = self.config.max_len if max_len is None else max_len
        if max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {max_len}")
        features = np.asarray(features, dtype=np.float64)
        trace = AttnTrace()
        with no_grad():
            V_proj = self.project_features(features)
            r_yn = self.retrieved_vector(f_yn) if self.mode.needs_store else None
            state = self.init_states(features.mean(axis=-2), r_yn)
            word = BOS_ID
            for _ in range(max_len):
                logits, state, (alpha, alpha_hat) = self.step(state, word, V_proj, r_yn)
                token = int(np.argmax(logits.data))
                trace.append(
                    self.token_text(token),
                    alpha.data,
                    None if alpha_hat is None else alpha_hat.data,
                )
                if token == EOS_ID:
                    break
                state.tokens.append(token)
                word = token
        return state.tokens, trace

