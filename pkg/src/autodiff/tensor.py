# -*- coding: utf-8 -*-
"""
Tensor y cinta de gradientes (modo reverso)

Las operaciones de ``src.autodiff.functional`` se graban en la cinta activa,
que se abre con ``with GradTape() as tape:`` (mismo patrón de contexto que el
tracer de spans). Sin cinta activa las operaciones solo calculan el forward.
"""
from __future__ import annotations

import contextvars
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.exceptions import NumericalError, TapeError

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]

_current_tape: "contextvars.ContextVar[Optional[GradTape]]" = contextvars.ContextVar(
    "current_tape", default=None
)


class Tensor:
    """Arreglo denso float64 con nombre opcional y marca de parámetro"""

    __slots__ = ("data", "name", "is_param", "requires_grad")

    def __init__(
        self,
        data: ArrayLike,
        name: Optional[str] = None,
        is_param: bool = False,
        requires_grad: Optional[bool] = None,
        dtype=np.float64,
    ) -> None:
        self.data = np.asarray(data, dtype=dtype)
        self.name = name
        self.is_param = is_param
        self.requires_grad = is_param if requires_grad is None else requires_grad

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"


def as_tensor(value: Union["Tensor", ArrayLike]) -> Tensor:
    """Envuelve arrays como tensores constantes"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class _Record:
    op: str
    outputs: Tuple[Tensor, ...]
    inputs: Tuple[Tensor, ...]
    backward: Callable[..., Sequence[Optional[np.ndarray]]]


class GradTape:
    """Registra operaciones en orden de ejecución para el backward"""

    def __init__(self) -> None:
        self._records: List[_Record] = []
        self._watched: Dict[int, Tensor] = {}
        self._produced: set = set()
        self._consumed = False
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "GradTape":
        self._token = _current_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._token is not None:
            _current_tape.reset(self._token)
            self._token = None
        return False

    @property
    def operations(self) -> List[str]:
        return [rec.op for rec in self._records]

    @property
    def consumed(self) -> bool:
        return self._consumed

    def watch(self, tensors: Union[Tensor, Iterable[Tensor]]) -> None:
        """Asegura una entrada de gradiente (cero si no se usa) para cada parámetro"""
        if isinstance(tensors, Tensor):
            tensors = [tensors]
        for t in tensors:
            self._watched[id(t)] = t

    def record(
        self,
        op: str,
        outputs: Tuple[Tensor, ...],
        inputs: Tuple[Tensor, ...],
        backward: Callable[..., Sequence[Optional[np.ndarray]]],
    ) -> None:
        if self._consumed:
            raise TapeError("tape already consumed by backward; run forward again")
        for t in inputs:
            if t.is_param:
                self._watched.setdefault(id(t), t)
        for out in outputs:
            self._produced.add(id(out))
        self._records.append(_Record(op, outputs, inputs, backward))

    def backward(self, loss: Tensor) -> Dict[str, np.ndarray]:
        if self._consumed:
            raise TapeError("backward called twice on the same tape")
        if loss.size != 1:
            raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise TapeError("loss was not produced by this tape's forward pass")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self._records):
            out_grads = [grads.pop(id(out), None) for out in rec.outputs]
            if all(g is None for g in out_grads):
                continue
            out_grads = [
                np.zeros_like(out.data) if g is None else g
                for g, out in zip(out_grads, rec.outputs)
            ]
            in_grads = rec.backward(*out_grads)
            for tensor, g in zip(rec.inputs, in_grads):
                if g is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g

        result: Dict[str, np.ndarray] = {}
        for key, param in self._watched.items():
            g = grads.get(key)
            if g is None:
                g = np.zeros_like(param.data)
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {param.name!r}")
            result[param.name or f"param_{key}"] = g

        self._consumed = True
        self._records.clear()
        self._produced.clear()
        return result


def current_tape() -> Optional[GradTape]:
    """Return the active tape if any."""
    return _current_tape.get()


def backward(tape: GradTape, loss: Tensor) -> Dict[str, np.ndarray]:
    """Gradientes de ``loss`` respecto a todos los parámetros vistos por la cinta"""
    return tape.backward(loss)


class no_grad:
    """Desactiva la grabación dentro del bloque (inferencia, decodificación)"""

    def __enter__(self) -> "no_grad":
        self._token = _current_tape.set(None)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _current_tape.reset(self._token)
        return False
