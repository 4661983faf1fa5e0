# -*- coding: utf-8 -*-
"""
Métricas de evaluación: BLEU-1..4 acumulado a nivel de corpus, accuracy,
F-score macro y acuerdo de la recuperación con el target real.
"""
from __future__ import annotations

import math
from collections import Counter
from typing import Dict, List, Sequence

import numpy as np

from src.data.datasets import tokenize
from src.utils.exceptions import MetricError

Tokens = Sequence[str]


def tokenize_for_bleu(text: str) -> List[str]:
    return tokenize(text)


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_length(candidate_len: int, references: Sequence[Tokens]) -> int:
    """Longitud de referencia más cercana; en empate gana la más corta"""
    return min((abs(len(r) - candidate_len), len(r)) for r in references)[1]


def bleu(
    candidates: Sequence[Tokens],
    references: Sequence[Sequence[Tokens]],
    max_n: int = 4,
) -> List[float]:
    """
    BLEU acumulado a nivel de corpus para n = 1..max_n.

    Precisiones modificadas con recorte por la cuenta máxima en cualquier
    referencia y penalización por brevedad exp(1 - r/c) cuando c < r.
    """
    if not candidates:
        raise MetricError("bleu needs at least one candidate")
    if len(candidates) != len(references):
        raise MetricError(
            f"{len(candidates)} candidates but {len(references)} reference sets"
        )
    if not 1 <= max_n <= 4:
        raise MetricError(f"max_n must be in 1..4, got {max_n}")

    clipped = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for candidate, refs in zip(candidates, references):
        if not refs:
            raise MetricError("every candidate needs at least one reference")
        cand_len += len(candidate)
        ref_len += _closest_length(len(candidate), refs)
        for n in range(1, max_n + 1):
            counts = _ngrams(candidate, n)
            max_ref: Counter = Counter()
            for ref in refs:
                max_ref |= _ngrams(ref, n)
            clipped[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[n - 1] += sum(counts.values())

    if cand_len == 0:
        return [0.0] * max_n
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)

    scores: List[float] = []
    log_sum = 0.0
    zero = False
    for n in range(max_n):
        if totals[n] == 0 or clipped[n] == 0:
            zero = True
        else:
            log_sum += math.log(clipped[n] / totals[n])
        scores.append(0.0 if zero else bp * math.exp(log_sum / (n + 1)))
    return scores


def bleu_report(candidates: Sequence[Tokens], references: Sequence[Sequence[Tokens]]) -> Dict[str, float]:
    return {f"bleu{n}": score for n, score in enumerate(bleu(candidates, references, 4), start=1)}


def _check_pairs(preds: Sequence[int], labels: Sequence[int]) -> None:
    if len(preds) != len(labels):
        raise MetricError(f"{len(preds)} predictions but {len(labels)} labels")
    if len(preds) == 0:
        raise MetricError("metrics need at least one example")


def accuracy(preds: Sequence[int], labels: Sequence[int]) -> float:
    _check_pairs(preds, labels)
    return float(np.mean(np.asarray(preds) == np.asarray(labels)))


def f_score(preds: Sequence[int], labels: Sequence[int]) -> float:
    """F1 macro sobre las clases presentes en predicciones o etiquetas"""
    _check_pairs(preds, labels)
    p, y = np.asarray(preds), np.asarray(labels)
    scores = []
    for cls in np.union1d(p, y):
        tp = int(np.sum((p == cls) & (y == cls)))
        fp = int(np.sum((p == cls) & (y != cls)))
        fn = int(np.sum((p != cls) & (y == cls)))
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(scores))


def label_agreement(neighbor_labels: Sequence[int], labels: Sequence[int]) -> float:
    """Fracción de ejemplos cuyo vecino recuperado tiene la etiqueta correcta"""
    return accuracy(neighbor_labels, labels)


def caption_agreement(
    retrieved: Sequence[Tokens], references: Sequence[Sequence[Tokens]]
) -> float:
    """BLEU-1 del caption recuperado contra las referencias del ejemplo"""
    return bleu(retrieved, references, max_n=1)[0]
