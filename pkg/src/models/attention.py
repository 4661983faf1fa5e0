# -*- coding: utf-8 -*-
"""
Atención aditiva sobre regiones (o estados ocultos) y atención multinivel de
dos vías entre el contexto atendido y el target recuperado.

Convención de formas: las regiones se pasan fila por fila, ``V`` es (..., K, D).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.autodiff.functional import (
    add,
    concat,
    dense,
    inner,
    mul,
    reshape,
    select,
    softmax,
    tanh,
    weighted_sum,
)
from src.autodiff.tensor import Tensor, as_tensor
from src.models.params import ModelParams
from src.utils.exceptions import DimensionError


@dataclass
class AdditiveAttnParams:
    """W_v (A x D_feat), W_h (A x D_hid), w_a (A)"""

    W_v: Tensor
    W_h: Tensor
    w_a: Tensor

    def __post_init__(self) -> None:
        A = self.W_v.shape[0]
        if self.W_h.shape[0] != A or self.w_a.shape != (A,):
            raise DimensionError(
                f"attention params do not conform: W_v {self.W_v.shape}, "
                f"W_h {self.W_h.shape}, w_a {self.w_a.shape}"
            )

    @classmethod
    def create(cls, params: ModelParams, prefix: str, feat_dim: int, hidden_dim: int, attn_dim: int):
        return cls(
            W_v=params.create(f"{prefix}.W_v", (attn_dim, feat_dim)),
            W_h=params.create(f"{prefix}.W_h", (attn_dim, hidden_dim)),
            w_a=params.create(f"{prefix}.w_a", (attn_dim,), fan_in=attn_dim),
        )


@dataclass
class MultiLevelAttnParams:
    """
    W_m (A x 2D), W_h (A x D_hid), w_hat (2 x A).

    ``w_hat`` produce dos logits, uno por elemento atendido; con un único
    escalar el softmax sería degenerado.
    """

    W_m: Tensor
    W_h: Tensor
    w_hat: Tensor

    def __post_init__(self) -> None:
        A = self.W_m.shape[0]
        if self.W_h.shape[0] != A or self.w_hat.shape != (2, A):
            raise DimensionError(
                f"multi-level attention params do not conform: W_m {self.W_m.shape}, "
                f"W_h {self.W_h.shape}, w_hat {self.w_hat.shape}"
            )

    @classmethod
    def create(cls, params: ModelParams, prefix: str, dim: int, hidden_dim: int, attn_dim: int):
        return cls(
            W_m=params.create(f"{prefix}.W_m", (attn_dim, 2 * dim)),
            W_h=params.create(f"{prefix}.W_h", (attn_dim, hidden_dim)),
            w_hat=params.create(f"{prefix}.w_hat", (2, attn_dim)),
        )


@dataclass
class AttnStep:
    token: str
    alpha_regions: List[float]
    alpha_image: float
    alpha_retrieved: float


@dataclass
class AttnTrace:
    """Pesos de atención por paso: regiones (o estados) y el par (imagen, recuperado)"""

    steps: List[AttnStep] = field(default_factory=list)

    def append(self, token: str, alpha: np.ndarray, alpha_hat: Optional[np.ndarray]) -> None:
        if alpha_hat is None:
            a_img, a_ret = 1.0, 0.0
        else:
            a_img, a_ret = float(alpha_hat[0]), float(alpha_hat[1])
        self.steps.append(AttnStep(token, [float(a) for a in alpha], a_img, a_ret))

    def to_list(self) -> List[dict]:
        return [asdict(step) for step in self.steps]

    def to_json(self) -> str:
        return json.dumps(self.to_list())


def _check_regions(V: Tensor) -> None:
    if V.ndim < 2 or V.shape[-2] == 0:
        raise DimensionError(f"attention needs at least one region, got shape {V.shape}")


def additive_attention(
    V, h_prev, p: AdditiveAttnParams, mask: Optional[np.ndarray] = None
) -> Tuple[Tensor, Tensor]:
    """
    a_i = w_a^T tanh(W_v v_i + W_h h_prev); alpha = softmax(a); c = sum alpha_i v_i.

    ``mask`` (..., K) marca las posiciones válidas cuando hay relleno.
    """
    V, h_prev = as_tensor(V), as_tensor(h_prev)
    _check_regions(V)
    if h_prev.shape[:-1] != V.shape[:-2]:
        raise DimensionError(
            f"additive_attention: state shape {h_prev.shape} does not match regions {V.shape}"
        )
    proj_v = dense(V, p.W_v)
    proj_h = dense(h_prev, p.W_h)
    proj_h = reshape(proj_h, proj_h.shape[:-1] + (1, proj_h.shape[-1]))
    scores = inner(tanh(add(proj_v, proj_h)), p.w_a)
    alpha = softmax(scores, axis=-1, mask=mask)
    return weighted_sum(alpha, V), alpha


def multi_level_attention(
    c_t, r_yn, h_prev, p: MultiLevelAttnParams
) -> Tuple[Tensor, Tensor]:
    """
    Dos logits a partir de tanh(W_m [c_t; r_yn] + W_h h_prev); devuelve
    c_hat = a1 c_t + a2 r_yn y el par (a1, a2) en la última dimensión.
    """
    c_t, r_yn, h_prev = as_tensor(c_t), as_tensor(r_yn), as_tensor(h_prev)
    if c_t.shape != r_yn.shape:
        raise DimensionError(
            f"multi_level_attention: context {c_t.shape} and retrieved vector {r_yn.shape} differ"
        )
    hidden = tanh(add(dense(concat([c_t, r_yn], axis=-1), p.W_m), dense(h_prev, p.W_h)))
    alpha_hat = softmax(dense(hidden, p.w_hat), axis=-1)
    c_hat = add(mul(select(alpha_hat, 0), c_t), mul(select(alpha_hat, 1), r_yn))
    return c_hat, alpha_hat


def sentiment_attention(
    H,
    h_T,
    r_yn,
    attn: AdditiveAttnParams,
    multi: Optional[MultiLevelAttnParams],
    mask: Optional[np.ndarray] = None,
) -> Tuple[Tensor, Tensor, Optional[Tensor]]:
    """
    Atención sobre todos los estados ocultos guiada por el último; si hay
    target recuperado, atención multinivel entre ese contexto y ``r_yn``.
    Devuelve (c_hat, alpha, alpha_hat).
    """
    context, alpha = additive_attention(H, h_T, attn, mask=mask)
    if r_yn is None or multi is None:
        return context, alpha, None
    c_hat, alpha_hat = multi_level_attention(context, r_yn, h_T, multi)
    return c_hat, alpha, alpha_hat
