# -*- coding: utf-8 -*-
"""
Benchmark sintético de prototipos.

Cada prototipo recibe un target (caption de longitud fija o etiqueta binaria
aleatoria) y cada ejemplo es el prototipo más ruido gaussiano con el target
copiado. Con ruido pequeño el vecino más cercano comparte prototipo, así que
la recuperación revela el target.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from config.schema import SynthSpec
from src.data.datasets import CaptionRecord, SentimentRecord, write_dataset
from src.data.features import write_features
from src.models.embeddings import ContextualEmbeddings, EmbeddingTable
from src.utils.exceptions import ConfigError
from src.utils.logger import setup_logger

logger = setup_logger()

DATASET_FILE = "dataset.jsonl"
EMBEDDINGS_FILE = "embeddings.vec"
FEATURES_DIR = "features"
SENTENCE_EMBEDDINGS_FILE = "sentence_embeddings.tsv"
CAPTION_EMBEDDINGS_FILE = "caption_embeddings.tsv"


@dataclass
class SynthOutput:
    out_dir: Path
    files: List[Path] = field(default_factory=list)
    prototype_of: Dict[int, int] = field(default_factory=dict)

    @property
    def dataset_path(self) -> Path:
        return self.out_dir / DATASET_FILE


def min_separation(prototypes: np.ndarray) -> float:
    """Menor distancia euclídea entre pares de prototipos"""
    diffs = prototypes[:, None, :] - prototypes[None, :, :]
    dists = np.sqrt((diffs**2).sum(axis=-1))
    np.fill_diagonal(dists, np.inf)
    return float(dists.min())


def _split_plan(spec: SynthSpec) -> List[Tuple[int, str, int]]:
    """(id, split, prototipo) con asignación round-robin por split"""
    plan = []
    next_id = 0
    for split, count in (("train", spec.train), ("val", spec.val), ("test", spec.test)):
        for i in range(count):
            plan.append((next_id, split, i % spec.prototypes))
            next_id += 1
    return plan


def _word_vectors(words: List[str], dim: int, rng: np.random.Generator) -> EmbeddingTable:
    return EmbeddingTable({w: rng.normal(0.0, 1.0, size=dim) for w in words})


def _distinct_sequences(
    count: int, length: int, pool: List[str], rng: np.random.Generator
) -> List[Tuple[str, ...]]:
    seen = set()
    sequences: List[Tuple[str, ...]] = []
    while len(sequences) < count:
        seq = tuple(pool[i] for i in rng.integers(0, len(pool), size=length))
        if seq not in seen:
            seen.add(seq)
            sequences.append(seq)
    return sequences


def _draw_prototypes(spec: SynthSpec, rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    protos = rng.uniform(-spec.prototype_scale, spec.prototype_scale, size=shape)
    pooled = protos.reshape(spec.prototypes, -1, spec.dim).mean(axis=1)
    separation = min_separation(pooled)
    if spec.noise >= separation / 2.0:
        raise ConfigError(
            f"noise {spec.noise} must be below half the minimum prototype separation "
            f"({separation / 2.0:.6f}); lower the noise or the prototype count",
            pointer="/synth/noise",
        )
    logger.info(f"Drew {spec.prototypes} prototypes, min separation {separation:.4f}")
    return protos


def generate_caption_benchmark(spec: SynthSpec, out_dir: Path) -> SynthOutput:
    rng = np.random.default_rng(spec.seed)
    output = SynthOutput(out_dir=out_dir)
    protos = _draw_prototypes(spec, rng, (spec.prototypes, spec.regions, spec.dim))
    pool = [f"w{i:03d}" for i in range(spec.word_pool)]
    captions = _distinct_sequences(spec.prototypes, spec.caption_length, pool, rng)
    table = _word_vectors(pool, spec.embed_dim, rng)

    records = []
    contextual: Dict[int, np.ndarray] = {}
    for example_id, split, proto in _split_plan(spec):
        regions = protos[proto] + rng.normal(0.0, spec.noise, size=(spec.regions, spec.dim))
        rel_path = f"{FEATURES_DIR}/{example_id:06d}.rafx"
        output.files.append(write_features(out_dir / rel_path, regions))
        caption = list(captions[proto])
        records.append(
            CaptionRecord(id=example_id, split=split, feature_path=rel_path, captions=[caption])
        )
        contextual[example_id] = np.mean([table.vector(w) for w in caption], axis=0)
        output.prototype_of[example_id] = proto

    output.files.append(write_dataset(out_dir / DATASET_FILE, records))
    output.files.append(table.save(out_dir / EMBEDDINGS_FILE))
    output.files.append(
        ContextualEmbeddings(contextual, spec.embed_dim).save(out_dir / CAPTION_EMBEDDINGS_FILE)
    )
    return output


def generate_sentiment_benchmark(spec: SynthSpec, out_dir: Path) -> SynthOutput:
    rng = np.random.default_rng(spec.seed)
    output = SynthOutput(out_dir=out_dir)
    protos = _draw_prototypes(spec, rng, (spec.prototypes, spec.dim))
    labels = rng.integers(0, 2, size=spec.prototypes)
    pool = [f"t{i:03d}" for i in range(spec.word_pool)]
    signatures = _distinct_sequences(spec.prototypes, spec.sentence_length, pool, rng)
    table = _word_vectors(pool, spec.embed_dim, rng)

    records = []
    sentence_vectors: Dict[int, np.ndarray] = {}
    for example_id, split, proto in _split_plan(spec):
        words = list(signatures[proto])
        flips = rng.random(len(words)) < spec.token_noise
        fillers = rng.integers(0, len(pool), size=len(words))
        words = [pool[f] if flip else w for w, flip, f in zip(words, flips, fillers)]
        records.append(
            SentimentRecord(
                id=example_id, split=split, text=" ".join(words), label=int(labels[proto])
            )
        )
        sentence_vectors[example_id] = protos[proto] + rng.normal(0.0, spec.noise, size=spec.dim)
        output.prototype_of[example_id] = proto

    output.files.append(write_dataset(out_dir / DATASET_FILE, records))
    output.files.append(table.save(out_dir / EMBEDDINGS_FILE))
    output.files.append(
        ContextualEmbeddings(sentence_vectors, spec.dim).save(out_dir / SENTENCE_EMBEDDINGS_FILE)
    )
    return output


def synth_generate(spec: SynthSpec, out_dir: Union[str, Path]) -> SynthOutput:
    """Genera el benchmark en ``out_dir``; determinista dado ``spec.seed``"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if spec.task == "caption":
        output = generate_caption_benchmark(spec, out_dir)
    else:
        output = generate_sentiment_benchmark(spec, out_dir)
    logger.info(
        f"Synthetic {spec.task} benchmark written to {out_dir}: "
        f"{spec.train}/{spec.val}/{spec.test} examples, {spec.prototypes} prototypes"
    )
    return output
