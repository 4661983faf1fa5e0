# -*- coding: utf-8 -*-
"""
Embeddings preentrenados: tabla estática de palabras (formato de texto tipo
fastText/word2vec) y embeddings contextuales precomputados por id de ejemplo.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from src.utils.atomic import atomic_write_text
from src.utils.exceptions import DimensionError, FormatError, MissingEmbeddingError
from src.utils.logger import setup_logger

logger = setup_logger()

PathLike = Union[str, Path]


def _format_vector(values: Iterable[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


class EmbeddingTable:
    """Mapa token -> vector; los tokens fuera del vocabulario devuelven ``None``"""

    def __init__(self, vectors: Mapping[str, Sequence[float]]) -> None:
        if not vectors:
            raise FormatError("embedding table must not be empty")
        self._vectors: Dict[str, np.ndarray] = {}
        dim: Optional[int] = None
        for token, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64).reshape(-1)
            if dim is None:
                dim = arr.shape[0]
            elif arr.shape[0] != dim:
                raise DimensionError(
                    f"embedding for {token!r} has dimension {arr.shape[0]}, expected {dim}"
                )
            self._vectors[token] = arr
        self.dim = int(dim)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def get(self, token: str) -> Optional[np.ndarray]:
        return self._vectors.get(token)

    def vector(self, token: str) -> np.ndarray:
        vec = self._vectors.get(token)
        if vec is None:
            raise MissingEmbeddingError(f"token {token!r} not in embedding table")
        return vec

    def tokens(self) -> List[str]:
        return list(self._vectors)

    def matrix_for(self, itos: Sequence[str], rng: np.random.Generator, pad_id: int = 0) -> np.ndarray:
        """Matriz (V, dim) en el orden del vocabulario; palabras ausentes al azar, PAD en cero"""
        matrix = rng.uniform(-0.1, 0.1, size=(len(itos), self.dim))
        hits = 0
        for idx, token in enumerate(itos):
            vec = self._vectors.get(token)
            if vec is not None:
                matrix[idx] = vec
                hits += 1
        matrix[pad_id] = 0.0
        logger.info(f"Embedding matrix built: {hits}/{len(itos)} tokens from pretrained table")
        return matrix

    def to_text(self, header: bool = True) -> str:
        lines = [f"{len(self._vectors)} {self.dim}"] if header else []
        for token, vec in self._vectors.items():
            lines.append(f"{token} {_format_vector(vec)}")
        return "\n".join(lines) + "\n"

    def save(self, path: PathLike) -> Path:
        return atomic_write_text(path, self.to_text())

    @classmethod
    def load(cls, path: PathLike) -> "EmbeddingTable":
        """Carga ``token v1 ... vD`` con una primera línea opcional ``count dim``"""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"embedding table not found: {path}")
        vectors: Dict[str, np.ndarray] = {}
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.rstrip("\n").rstrip().split(" ")
                if not parts or parts == [""]:
                    continue
                if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                    continue
                try:
                    vectors[parts[0]] = np.asarray([float(v) for v in parts[1:]], dtype=np.float64)
                except ValueError as e:
                    raise FormatError(f"{path}:{lineno}: malformed embedding line") from e
        try:
            table = cls(vectors)
        except DimensionError as e:
            raise FormatError(f"{path}: {e}") from e
        logger.info(f"Loaded {len(table)} word vectors (dim={table.dim}) from {path}")
        return table


class ContextualEmbeddings:
    """Vectores precomputados por id (``#dim D`` + líneas ``id<TAB>v1 ... vD``)"""

    def __init__(self, vectors: Mapping[int, Sequence[float]], dim: int) -> None:
        self.dim = int(dim)
        self._vectors: Dict[int, np.ndarray] = {}
        for example_id, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64).reshape(-1)
            if arr.shape[0] != self.dim:
                raise DimensionError(
                    f"embedding for id {example_id} has dimension {arr.shape[0]}, expected {self.dim}"
                )
            self._vectors[int(example_id)] = arr

    def __contains__(self, example_id: int) -> bool:
        return int(example_id) in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def ids(self) -> List[int]:
        return list(self._vectors)

    def get(self, example_id: int) -> np.ndarray:
        vec = self._vectors.get(int(example_id))
        if vec is None:
            raise MissingEmbeddingError(f"no precomputed embedding for id {example_id}")
        return vec

    def to_text(self) -> str:
        lines = [f"#dim {self.dim}"]
        for example_id, vec in self._vectors.items():
            lines.append(f"{example_id}\t{_format_vector(vec)}")
        return "\n".join(lines) + "\n"

    def save(self, path: PathLike) -> Path:
        return atomic_write_text(path, self.to_text())

    @classmethod
    def load(cls, path: PathLike) -> "ContextualEmbeddings":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"precomputed embedding file not found: {path}")
        with path.open("r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if not header.startswith("#dim "):
                raise FormatError(f"{path}:1: expected '#dim D' header")
            try:
                dim = int(header.split()[1])
            except (IndexError, ValueError) as e:
                raise FormatError(f"{path}:1: malformed '#dim' header") from e
            vectors: Dict[int, np.ndarray] = {}
            for lineno, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                try:
                    raw_id, raw_vec = line.split("\t", 1)
                    vectors[int(raw_id)] = np.asarray(
                        [float(v) for v in raw_vec.split()], dtype=np.float64
                    )
                except ValueError as e:
                    raise FormatError(f"{path}:{lineno}: malformed embedding line") from e
        try:
            embeddings = cls(vectors, dim)
        except DimensionError as e:
            raise FormatError(f"{path}: {e}") from e
        logger.info(f"Loaded {len(embeddings)} precomputed vectors (dim={dim}) from {path}")
        return embeddings
