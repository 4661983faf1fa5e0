# -*- coding: utf-8 -*-
"""
Verificación de gradientes por diferencias finitas centrales
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from src.autodiff.tensor import GradTape, Tensor, backward


@dataclass
class GradCheckReport:
    """Error relativo por parámetro entre gradiente de cinta y numérico"""

    errors: Dict[str, float] = field(default_factory=dict)

    @property
    def max_relative_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def worst(self) -> Optional[str]:
        if not self.errors:
            return None
        return max(self.errors, key=self.errors.get)


def numerical_gradient(
    fn: Callable[[], Tensor],
    param: Tensor,
    eps: float = 1e-4,
    indices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Diferencias centrales sobre las entradas ``indices`` (todas por defecto)"""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    grad_flat = grad.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    for idx in positions:
        original = flat[idx]
        flat[idx] = original + eps
        plus = fn().item()
        flat[idx] = original - eps
        minus = fn().item()
        flat[idx] = original
        grad_flat[idx] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(
    fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-4,
    max_entries: Optional[int] = None,
    seed: int = 0,
    floor: float = 1e-8,
) -> GradCheckReport:
    """
    Compara los gradientes de la cinta con diferencias finitas centrales.

    ``fn`` debe ser determinista (sin dropout activo). Con ``max_entries`` solo
    se comprueba una muestra fija de entradas por parámetro. ``floor`` acota por
    abajo la escala del error relativo para parámetros con gradiente casi nulo.
    """
    with GradTape() as tape:
        tape.watch(params.values())
        loss = fn()
    analytic = backward(tape, loss)

    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    for name, param in params.items():
        indices = None
        if max_entries is not None and param.size > max_entries:
            indices = np.sort(rng.choice(param.size, size=max_entries, replace=False))
        numeric = numerical_gradient(fn, param, eps=eps, indices=indices)
        a = analytic[name]
        if indices is not None:
            a = a.reshape(-1)[indices]
            numeric = numeric.reshape(-1)[indices]
        report.errors[name] = relative_error(a, numeric, floor)
    return report
