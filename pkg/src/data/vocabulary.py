# -*- coding: utf-8 -*-
"""
Vocabulario con tokens especiales reservados y umbral de frecuencia mínima
"""
from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

from src.models.config import BOS_ID, EOS_ID, PAD_ID, UNK_ID
from src.utils.atomic import atomic_write_text
from src.utils.exceptions import FormatError
from src.utils.logger import setup_logger

logger = setup_logger()

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
DEFAULT_MIN_COUNT = 5


class Vocabulary:
    """Mapa token <-> id; los ids 0..3 son PAD, BOS, EOS y UNK"""

    def __init__(self, itos: Sequence[str], min_count: int = DEFAULT_MIN_COUNT) -> None:
        if tuple(itos[: len(SPECIALS)]) != SPECIALS:
            raise FormatError(f"vocabulary must start with {list(SPECIALS)}")
        if len(set(itos)) != len(itos):
            raise FormatError("vocabulary has duplicate tokens")
        self.itos: List[str] = list(itos)
        self.stoi: Dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        self.min_count = min_count

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], min_count: int = DEFAULT_MIN_COUNT) -> "Vocabulary":
        """Palabras con al menos ``min_count`` apariciones, ordenadas por frecuencia y luego alfabéticamente"""
        counts = Counter(token for sentence in sentences for token in sentence)
        kept = sorted(
            (t for t, c in counts.items() if c >= min_count and t not in SPECIALS),
            key=lambda t: (-counts[t], t),
        )
        vocab = cls(list(SPECIALS) + kept, min_count)
        logger.info(
            f"Vocabulary built: {len(kept)} words kept of {len(counts)} (min_count={min_count})"
        )
        return vocab

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int]) -> List[str]:
        """Convierte ids en palabras hasta EOS, omitiendo PAD y BOS"""
        words: List[str] = []
        for i in ids:
            if i == EOS_ID:
                break
            if i in (PAD_ID, BOS_ID):
                continue
            words.append(self.itos[i])
        return words

    def to_manifest(self) -> dict:
        return {
            "specials": list(SPECIALS),
            "min_count": self.min_count,
            "size": len(self.itos),
            "itos": self.itos,
        }

    def save(self, path: Union[str, Path]) -> Path:
        return atomic_write_text(path, json.dumps(self.to_manifest(), ensure_ascii=False, indent=1) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"vocabulary manifest not found: {path}")
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
            return cls(manifest["itos"], manifest.get("min_count", DEFAULT_MIN_COUNT))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise FormatError(f"invalid vocabulary manifest {path}: {e}") from e
