# -*- coding: utf-8 -*-
"""
Colección nombrada de parámetros de un modelo
"""
from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from src.autodiff.tensor import Tensor
from src.utils.exceptions import DimensionError


class ModelParams(Mapping[str, Tensor]):
    """
    Parámetros con inicialización uniforme en [-1/sqrt(fan_in), 1/sqrt(fan_in)].

    El orden de creación es estable y define el orden de serialización.
    """

    def __init__(self, rng: Optional[np.random.Generator] = None) -> None:
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._rng = rng if rng is not None else np.random.default_rng(0)

    def create(self, name: str, shape: Tuple[int, ...], fan_in: Optional[int] = None) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        fan_in = fan_in if fan_in is not None else shape[-1]
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        data = self._rng.uniform(-bound, bound, size=shape)
        return self.put(name, data)

    def put(self, name: str, data: np.ndarray) -> Tensor:
        tensor = Tensor(np.array(data, dtype=np.float64), name=name, is_param=True)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def arrays(self) -> Dict[str, np.ndarray]:
        """Copia de los valores actuales (snapshot)"""
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Sobrescribe en sitio; nombres y formas deben coincidir exactamente"""
        if set(arrays) != set(self._params):
            missing = sorted(set(self._params) - set(arrays))
            extra = sorted(set(arrays) - set(self._params))
            raise DimensionError(f"parameter names differ (missing={missing}, extra={extra})")
        for name, value in arrays.items():
            target = self._params[name]
            if target.shape != value.shape:
                raise DimensionError(
                    f"parameter {name!r} has shape {target.shape}, checkpoint has {value.shape}"
                )
            target.data[...] = value

    def count(self) -> int:
        return int(sum(t.size for t in self._params.values()))
