# -*- coding: utf-8 -*-
from typing import Optional


class RetrievalAugmentationError(Exception):
    """Excepción base del toolkit"""

    pass


class DimensionError(RetrievalAugmentationError, ValueError):
    """Formas incompatibles entre tensores o vectores"""

    pass


class ConfigError(RetrievalAugmentationError, ValueError):
    """Configuración o hiperparámetros inválidos"""

    def __init__(self, message: str, pointer: Optional[str] = None):
        if pointer is not None:
            message = f"{pointer}: {message}"
        super().__init__(message)
        self.pointer = pointer


class FormatError(RetrievalAugmentationError):
    """Archivo binario o de texto con formato inválido"""

    pass


class TapeError(RetrievalAugmentationError):
    """Uso inválido de la cinta de gradientes"""

    pass


class NumericalError(RetrievalAugmentationError):
    """Valores no finitos en un paso forward o backward"""

    pass


class InvalidTargetError(RetrievalAugmentationError, ValueError):
    """Índice de clase fuera del vocabulario o etiqueta fuera de {0, 1}"""

    pass


class StoreError(RetrievalAugmentationError):
    """Excepción para errores del índice de ejemplos"""

    pass


class DuplicateIdError(StoreError):
    """El id ya existe en el índice"""

    pass


class EmptyStoreError(StoreError):
    """No quedan candidatos tras aplicar la exclusión"""

    pass


class MissingEmbeddingError(RetrievalAugmentationError, KeyError):
    """No existe embedding precomputado para el id pedido"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class DatasetError(RetrievalAugmentationError):
    """Registro de dataset inválido (incluye número de línea)"""

    pass


class CheckpointError(RetrievalAugmentationError):
    """Checkpoint inexistente o corrupto"""

    pass


class MetricError(RetrievalAugmentationError, ValueError):
    """Entradas inválidas para una métrica (vacías o de longitudes distintas)"""

    pass
