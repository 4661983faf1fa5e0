# -*- coding: utf-8 -*-
"""
Optimizador Adam con corrección de sesgo
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from src.autodiff.tensor import Tensor
from src.utils.exceptions import DimensionError


@dataclass
class AdamState:
    """Primer y segundo momento por parámetro y contador de pasos"""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> Tuple[Mapping[str, Tensor], AdamState]:
    """Actualiza ``params`` en sitio; parámetros sin gradiente no se mueven"""
    for name, grad in grads.items():
        if name not in params:
            raise DimensionError(f"gradient for unknown parameter {name!r}")
        if params[name].shape != grad.shape:
            raise DimensionError(
                f"adam_step: parameter {name!r} has shape {params[name].shape} "
                f"but gradient has shape {grad.shape}"
            )

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t

    for name, grad in grads.items():
        param = params[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)

    return params, state
