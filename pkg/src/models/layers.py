# -*- coding: utf-8 -*-
"""
Constructores de capas compartidos por ambos modelos
"""
from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Optional

import numpy as np

from src.autodiff.functional import LstmParams
from src.autodiff.tensor import Tensor
from src.models.config import PAD_ID
from src.models.params import ModelParams
from src.models.target_encoders import Projection
from src.utils.exceptions import DimensionError


def build_lstm_params(params: ModelParams, prefix: str, input_dim: int, hidden_dim: int) -> LstmParams:
    fan_in = input_dim + hidden_dim
    gates = {
        f"W_{g}": params.create(f"{prefix}.W_{g}", (hidden_dim, fan_in), fan_in=fan_in)
        for g in "ifog"
    }
    biases = {
        f"b_{g}": params.create(f"{prefix}.b_{g}", (hidden_dim,), fan_in=fan_in) for g in "ifog"
    }
    return LstmParams(input_dim=input_dim, hidden_dim=hidden_dim, **gates, **biases)


def init_embedding(
    config, params: ModelParams, matrix: Optional[np.ndarray], rng: np.random.Generator
) -> Tensor:
    """Embeddings de palabras: preentrenados y congelados salvo ``finetune_embeddings``"""
    shape = (config.vocab_size, config.embed_dim)
    if matrix is None:
        matrix = rng.uniform(-0.1, 0.1, size=shape)
        matrix[PAD_ID] = 0.0
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != shape:
        raise DimensionError(f"embedding matrix has shape {matrix.shape}, expected {shape}")
    if config.finetune_embeddings:
        return params.put("embedding", matrix)
    return Tensor(matrix.copy(), name="embedding")


def build_projection(config, params: ModelParams) -> Projection:
    W_n = params.create("retrieval.W_n", (config.hidden_dim, config.encode_dim))
    b_n = None
    if config.projection_bias:
        b_n = params.create("retrieval.b_n", (config.hidden_dim,), fan_in=config.encode_dim)
    return Projection(W_n=W_n, b_n=b_n)


class StatefulModel:
    """Serialización común: parámetros entrenables más la tabla congelada"""

    config = None
    params: ModelParams
    embedding: Tensor

    def state_dict(self) -> Dict[str, np.ndarray]:
        state: Dict[str, np.ndarray] = OrderedDict(self.params.arrays())
        if not self.config.finetune_embeddings:
            state["embedding"] = self.embedding.data.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        state = dict(state)
        if not self.config.finetune_embeddings:
            if "embedding" not in state:
                raise DimensionError("state has no 'embedding' table")
            matrix = np.asarray(state.pop("embedding"))
            if matrix.shape != self.embedding.shape:
                raise DimensionError(
                    f"embedding has shape {self.embedding.shape}, checkpoint has {matrix.shape}"
                )
            self.embedding.data[...] = matrix
        self.params.load_arrays(state)
