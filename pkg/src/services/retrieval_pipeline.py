# -*- coding: utf-8 -*-
"""
Servicio que orquesta una corrida completa: índice de ejemplos, vecinos
precomputados, entrenamiento, evaluación, generación, volcado de atención y
ablación. Es la capa que usa la CLI.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.schema import CAPTION_METRICS, RunConfig
from src.data.datasets import (
    CaptionRecord,
    Dataset,
    Record,
    load_dataset,
    select_caption,
)
from src.data.features import pooled, read_features
from src.data.synthetic import SynthOutput, synth_generate
from src.data.vocabulary import Vocabulary
from src.models.captioning import CaptionBatch, CaptionModel
from src.models.checkpoint import Model, build_model, restore_model
from src.models.config import BOS_ID, EOS_ID, PAD_ID, CaptionModelConfig, RetrievalMode, SentimentModelConfig
from src.models.embeddings import ContextualEmbeddings, EmbeddingTable
from src.models.sentiment import SentimentBatch, SentimentModel
from src.models.target_encoders import (
    ClassMeans,
    SentimentSample,
    TargetEncoder,
    TargetEncoderConfig,
    TargetMode,
)
from src.storage.example_store import ExampleStore, RetrievalHit, TargetPayload
from src.training.ablation import ALL_MODES, AblationTable, run_ablation
from src.training.evaluation import accuracy, bleu, caption_agreement, f_score, label_agreement
from src.training.trainer import BEST_CHECKPOINT, TrainResult, train
from src.utils.atomic import atomic_write_text
from src.utils.exceptions import (
    CheckpointError,
    ConfigError,
    DimensionError,
    MissingEmbeddingError,
    NumericalError,
    RetrievalAugmentationError,
)
from src.utils.logger import setup_logger

logger = setup_logger()

VOCAB_FILE = "vocab.json"
PathLike = Union[str, Path]


@dataclass
class PreparedExample:
    """Ejemplo con su entrada ya cargada y el vecino recuperado codificado"""

    record: Record
    token_ids: List[int]
    regions: Optional[np.ndarray] = None
    query: Optional[np.ndarray] = None
    hit: Optional[RetrievalHit] = None
    neighbor_target: Optional[TargetPayload] = None
    f_yn: Optional[np.ndarray] = None

    @property
    def id(self) -> int:
        return self.record.id


class RetrievalPipeline:
    """Una corrida configurada por ``RunConfig``; los recursos se cargan bajo demanda"""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self.task = config.task
        self.run_dir = config.run_path
        self._dataset: Optional[Dataset] = None
        self._vocab: Optional[Vocabulary] = None
        self._table: Optional[EmbeddingTable] = None
        self._sentence_vectors: Optional[ContextualEmbeddings] = None
        self._caption_vectors: Optional[ContextualEmbeddings] = None
        self._store: Optional[ExampleStore] = None
        self._encoder: Optional[TargetEncoder] = None
        self._prepared: Dict[str, List[PreparedExample]] = {}

    # ======= RECURSOS =======

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            self._dataset = load_dataset(self.config.require_data().dataset, self.task)
        return self._dataset

    @property
    def vocab(self) -> Vocabulary:
        """Vocabulario del split de train; se guarda en ``<run>/vocab.json`` y se reutiliza"""
        if self._vocab is None:
            path = self.run_dir / VOCAB_FILE
            if path.exists():
                self._vocab = Vocabulary.load(path)
                logger.info(f"Reusing vocabulary manifest {path} ({len(self._vocab)} tokens)")
            else:
                self._vocab = Vocabulary.build(
                    self._train_sentences(), self.config.require_data().min_count
                )
                self._vocab.save(path)
        return self._vocab

    def _train_sentences(self) -> Iterable[Sequence[str]]:
        for record in self.dataset.require_split("train"):
            if isinstance(record, CaptionRecord):
                yield from record.captions
            else:
                yield record.tokens

    @property
    def table(self) -> EmbeddingTable:
        if self._table is None:
            self._table = EmbeddingTable.load(self.config.require_data().embeddings)
        return self._table

    @property
    def sentence_vectors(self) -> ContextualEmbeddings:
        if self._sentence_vectors is None:
            path = self.config.require_data().sentence_embeddings
            if path is None:
                raise ConfigError(
                    "sentiment runs need precomputed sentence embeddings",
                    pointer="/data/sentence_embeddings",
                )
            self._sentence_vectors = ContextualEmbeddings.load(path)
        return self._sentence_vectors

    @property
    def caption_vectors(self) -> ContextualEmbeddings:
        if self._caption_vectors is None:
            path = self.config.require_data().caption_embeddings
            if path is None:
                raise ConfigError(
                    "contextual target mode needs precomputed caption embeddings",
                    pointer="/data/caption_embeddings",
                )
            self._caption_vectors = ContextualEmbeddings.load(path)
        return self._caption_vectors

    def feature_path(self, record: CaptionRecord) -> Path:
        data = self.config.require_data()
        base = Path(data.features_dir) if data.features_dir else Path(data.dataset).parent
        return base / record.feature_path

    def input_vector(self, record: Record, regions: Optional[np.ndarray] = None) -> np.ndarray:
        """Representación de entrada usada como clave de búsqueda"""
        if isinstance(record, CaptionRecord):
            if regions is None:
                regions = read_features(self.feature_path(record))
            return pooled(regions)
        return self.sentence_vectors.get(record.id)

    def target_payload(self, record: Record) -> TargetPayload:
        if isinstance(record, CaptionRecord):
            caption = select_caption(record.captions, self.config.index.target_selection)
            return TargetPayload.of_caption(self.vocab.encode(caption))
        return TargetPayload.of_label(record.label)

    # ======= ÍNDICE =======

    def build_index(self) -> ExampleStore:
        """Indexa las entradas del split de train con su target y guarda el archivo"""
        train_records = self.dataset.require_split("train")
        store: Optional[ExampleStore] = None
        for record in train_records:
            vector = self.input_vector(record)
            if store is None:
                store = ExampleStore(vector.shape[0], self.config.index.metric)
            store.add(record.id, vector, self.target_payload(record))
        store.freeze()
        store.save(self.config.index_path)
        self._store = store
        return store

    def has_store(self) -> bool:
        return self._store is not None or self.config.index_path.exists()

    @property
    def store(self) -> ExampleStore:
        if self._store is None:
            if not self.config.index_path.exists():
                raise ConfigError(
                    f"example store not found at {self.config.index_path}; run build-index first",
                    pointer="/index/path",
                )
            self._store = ExampleStore.load(self.config.index_path).freeze()
        return self._store

    def retrieve(self, record: Record, query: np.ndarray, training: bool) -> Tuple[RetrievalHit, TargetPayload]:
        exclude = {record.id} if training and self.config.index.exclude_self else set()
        return self.store.nearest(query, exclude=exclude)

    # ======= CODIFICACIÓN DEL TARGET =======

    def _class_means(self, mode: TargetMode) -> ClassMeans:
        corpus = [
            SentimentSample(example_id=r.id, tokens=tuple(r.tokens), label=r.label)
            for r in self.dataset.require_split("train")
        ]
        contextual = self.sentence_vectors if mode is TargetMode.CLASS_CONTEXTUAL else None
        table = None if mode is TargetMode.CLASS_CONTEXTUAL else self.table
        return ClassMeans.fit(corpus, mode, table=table, contextual=contextual)

    @property
    def target_encoder(self) -> TargetEncoder:
        if self._encoder is None:
            mode = self.config.target_mode
            cfg = TargetEncoderConfig(mode=mode, lstm_dim=self.config.model.hidden_dim).validate_for(
                self.task
            )
            kwargs = {}
            if mode in (TargetMode.AVG, TargetMode.WEIGHTED):
                kwargs = {"table": self.table, "itos": self.vocab.itos}
            elif mode is TargetMode.CONTEXTUAL:
                kwargs = {"contextual": self.caption_vectors}
            elif mode is not TargetMode.PLUSMINUS:
                kwargs = {"class_means": self._class_means(mode)}
            self._encoder = TargetEncoder(cfg, **kwargs)
        return self._encoder

    def encode_target(self, payload: TargetPayload, neighbor_id: int) -> np.ndarray:
        try:
            return self.target_encoder.encode(payload, neighbor_id)
        except (MissingEmbeddingError, NumericalError) as e:
            logger.warning(f"Retrieved target of example {neighbor_id} has no usable encoding ({e}); using zeros")
            return np.zeros(self.target_encoder.encode_dim)

    # ======= PREPARACIÓN DE EJEMPLOS =======

    def prepare(self, split: str, with_retrieval: bool = True) -> List[PreparedExample]:
        """Carga entradas y, si hay índice, el vecino más cercano (excluyendo el propio en train)"""
        key = f"{split}:{int(with_retrieval)}"
        if key in self._prepared:
            return self._prepared[key]
        training = split == "train"
        prepared: List[PreparedExample] = []
        for record in self.dataset.require_split(split):
            if isinstance(record, CaptionRecord):
                regions = read_features(self.feature_path(record)).astype(np.float64)
                example = PreparedExample(record=record, token_ids=[], regions=regions)
                example.query = self.input_vector(record, regions)
            else:
                example = PreparedExample(record=record, token_ids=self.vocab.encode(record.tokens))
                example.query = self.input_vector(record)
            if with_retrieval:
                example.hit, example.neighbor_target = self.retrieve(record, example.query, training)
            prepared.append(example)
        if with_retrieval:
            logger.info(
                f"Prepared {len(prepared)} {split} examples with neighbors "
                f"(self-exclusion={'on' if training and self.config.index.exclude_self else 'off'})"
            )
        self._prepared[key] = prepared
        return prepared

    def _attach_encodings(self, examples: List[PreparedExample]) -> None:
        for example in examples:
            if example.f_yn is None and example.hit is not None:
                example.f_yn = self.encode_target(example.neighbor_target, example.hit.id)

    def examples_for(self, split: str, mode: RetrievalMode) -> List[PreparedExample]:
        mode = RetrievalMode(mode)
        examples = self.prepare(split, with_retrieval=mode.needs_store)
        if mode.needs_store:
            self._attach_encodings(examples)
        return examples

    # ======= MODELOS =======

    def model_config(self, mode: RetrievalMode) -> Union[CaptionModelConfig, SentimentModelConfig]:
        m = self.config.model
        mode = RetrievalMode(mode)
        encode_dim = self.target_encoder.encode_dim if mode.needs_store else self.table.dim
        common = dict(
            vocab_size=len(self.vocab),
            embed_dim=self.table.dim,
            hidden_dim=m.hidden_dim,
            attn_dim=m.attn_dim,
            retrieval_mode=mode,
            encode_dim=encode_dim,
            dropout=m.dropout,
            finetune_embeddings=m.finetune_embeddings,
            projection_bias=m.projection_bias,
            seed=m.seed,
            target_mode=self.config.target_mode,
        )
        if self.task == "caption":
            sample = self.prepare("train", with_retrieval=False)[0].regions
            return CaptionModelConfig(
                **common, feature_dim=sample.shape[1], regions=sample.shape[0], max_len=m.max_len
            )
        return SentimentModelConfig(**common)

    def create_model(self, mode: RetrievalMode) -> Model:
        config = self.model_config(mode)
        rng = np.random.default_rng(config.seed)
        matrix = self.table.matrix_for(self.vocab.itos, rng, pad_id=PAD_ID)
        encoder = self.target_encoder if RetrievalMode(mode).needs_store else None
        return build_model(config, matrix, encoder, self.vocab.itos)

    def checkpoint_path(self, run_dir: Optional[Path] = None) -> Path:
        return (run_dir or self.run_dir) / BEST_CHECKPOINT

    def restore(self, mode: RetrievalMode, run_dir: Optional[Path] = None) -> Model:
        path = self.checkpoint_path(run_dir)
        if not path.exists():
            raise CheckpointError(f"no trained checkpoint at {path}; run train first")
        mode = RetrievalMode(mode)
        encoder = self.target_encoder if mode.needs_store else None
        model = restore_model(path, target_encoder=encoder, itos=self.vocab.itos)
        if model.mode is not mode:
            raise ConfigError(
                f"checkpoint {path} was trained with mode {model.mode.value!r}, not {mode.value!r}",
                pointer="/model/retrieval_mode",
            )
        return model

    # ======= BATCHES =======

    def make_batch(self, units: Sequence, training: bool = True):
        if self.task == "caption":
            return self._caption_batch(units)
        return self._sentiment_batch(units)

    def caption_units(self, examples: Sequence[PreparedExample]) -> List[Tuple[PreparedExample, List[int]]]:
        """Un par (imagen, caption de referencia) por caption; teacher forcing sobre cada uno"""
        return [(ex, self.vocab.encode(c)) for ex in examples for c in ex.record.captions]

    def _caption_batch(self, units: Sequence[Tuple[PreparedExample, List[int]]]) -> CaptionBatch:
        shapes = {ex.regions.shape for ex, _ in units}
        if len(shapes) != 1:
            raise DimensionError(f"all images in a batch need the same K x D features, got {sorted(shapes)}")
        T = max(len(ids) for _, ids in units) + 1
        B = len(units)
        inputs = np.full((B, T), PAD_ID, dtype=np.int64)
        targets = np.full((B, T), PAD_ID, dtype=np.int64)
        mask = np.zeros((B, T), dtype=np.float64)
        for row, (_, ids) in enumerate(units):
            seq_in = [BOS_ID] + ids
            seq_out = ids + [EOS_ID]
            inputs[row, : len(seq_in)] = seq_in
            targets[row, : len(seq_out)] = seq_out
            mask[row, : len(seq_out)] = 1.0
        features = np.stack([ex.regions for ex, _ in units])
        retrieved = None
        if units[0][0].f_yn is not None:
            retrieved = np.stack([ex.f_yn for ex, _ in units])
        return CaptionBatch(
            features=features,
            v_bar=features.mean(axis=-2),
            inputs=inputs,
            targets=targets,
            mask=mask,
            retrieved=retrieved,
        )

    def _sentiment_batch(self, examples: Sequence[PreparedExample]) -> SentimentBatch:
        T = max(len(ex.token_ids) for ex in examples)
        tokens = np.full((len(examples), T), PAD_ID, dtype=np.int64)
        mask = np.zeros((len(examples), T), dtype=bool)
        for row, ex in enumerate(examples):
            tokens[row, : len(ex.token_ids)] = ex.token_ids
            mask[row, : len(ex.token_ids)] = True
        labels = np.asarray([ex.record.label for ex in examples], dtype=np.float64)
        retrieved = None
        if examples[0].f_yn is not None:
            retrieved = np.stack([ex.f_yn for ex in examples])
        return SentimentBatch(tokens=tokens, mask=mask, labels=labels, retrieved=retrieved)

    # ======= EVALUACIÓN =======

    def decode_captions(self, model: CaptionModel, examples: Sequence[PreparedExample]) -> List[List[str]]:
        captions = []
        for ex in examples:
            tokens, _ = model.greedy_decode(ex.regions, ex.f_yn)
            captions.append(self.vocab.decode(tokens))
        return captions

    def predict_labels(self, model: SentimentModel, examples: Sequence[PreparedExample]) -> List[int]:
        preds: List[int] = []
        batch_size = self.config.train.batch_size
        for start in range(0, len(examples), batch_size):
            batch = self._sentiment_batch(examples[start : start + batch_size])
            preds += model.predict(batch.tokens, batch.mask, batch.retrieved).tolist()
        return preds

    def selection_metric(self, model: Model, examples: Sequence[PreparedExample]) -> float:
        metric = self.config.train.metric_for(self.task)
        if self.task == "caption":
            if metric not in CAPTION_METRICS:
                raise ConfigError(
                    f"caption runs select on one of {list(CAPTION_METRICS)}",
                    pointer="/train/selection_metric",
                )
            refs = [ex.record.captions for ex in examples]
            scores = bleu(self.decode_captions(model, examples), refs, 4)
            if metric == "bleu_avg":
                return float(np.mean(scores))
            return scores[int(metric[-1]) - 1]
        if metric != "accuracy":
            raise ConfigError("sentiment runs select on accuracy", pointer="/train/selection_metric")
        return accuracy(self.predict_labels(model, examples), [ex.record.label for ex in examples])

    def evaluate_model(self, model: Model, split: str = "test") -> Dict[str, float]:
        """Métricas de la tarea más el acuerdo de la recuperación si hay índice"""
        examples = self.examples_for(split, model.mode)
        if self.task == "caption":
            refs = [ex.record.captions for ex in examples]
            scores = bleu(self.decode_captions(model, examples), refs, 4)
            metrics = {f"bleu{n}": s for n, s in enumerate(scores, start=1)}
        else:
            labels = [ex.record.label for ex in examples]
            preds = self.predict_labels(model, examples)
            metrics = {"accuracy": accuracy(preds, labels), "f_score": f_score(preds, labels)}
        metrics.update(self.retrieval_agreement(split))
        return metrics

    def retrieval_agreement(self, split: str) -> Dict[str, float]:
        if not self.has_store():
            return {}
        examples = self.prepare(split, with_retrieval=True)
        if self.task == "caption":
            retrieved = [self.vocab.decode(ex.neighbor_target.caption) for ex in examples]
            return {"retrieval_bleu1": caption_agreement(retrieved, [ex.record.captions for ex in examples])}
        return {
            "retrieval_accuracy": label_agreement(
                [ex.neighbor_target.label for ex in examples], [ex.record.label for ex in examples]
            )
        }

    # ======= COMANDOS =======

    def train(self, mode: Optional[RetrievalMode] = None, run_dir: Optional[Path] = None) -> TrainResult:
        mode = RetrievalMode(mode or self.config.model.retrieval_mode)
        run_dir = run_dir or self.run_dir
        model = self.create_model(mode)
        train_examples = self.examples_for("train", mode)
        val_examples = self.examples_for("val", mode)
        units = self.caption_units(train_examples) if self.task == "caption" else train_examples
        return train(
            model,
            units,
            self.make_batch,
            lambda m: self.selection_metric(m, val_examples),
            self.config.train,
            run_dir,
            lr=self.config.train.lr_for(self.task),
            meta={"mode": mode.value, "target_mode": self.config.target_mode.value},
        )

    def evaluate(self, mode: Optional[RetrievalMode] = None, split: str = "test") -> Dict[str, float]:
        mode = RetrievalMode(mode or self.config.model.retrieval_mode)
        metrics = self.evaluate_model(self.restore(mode), split)
        atomic_write_text(
            self.run_dir / f"eval_{mode.value}_{split}.json", json.dumps(metrics, sort_keys=True) + "\n"
        )
        logger.info(f"Evaluation ({mode.value}, {split}): {metrics}")
        return metrics

    def generate(self, out_path: PathLike, mode: Optional[RetrievalMode] = None, split: str = "test") -> Path:
        """Una línea JSON por imagen: caption voraz e id del vecino recuperado"""
        if self.task != "caption":
            raise ConfigError("generate is only defined for caption runs", pointer="/task")
        mode = RetrievalMode(mode or self.config.model.retrieval_mode)
        model = self.restore(mode)
        lines = []
        for ex in self.examples_for(split, mode):
            tokens, _ = model.greedy_decode(ex.regions, ex.f_yn)
            lines.append(
                json.dumps(
                    {
                        "id": ex.id,
                        "caption": " ".join(self.vocab.decode(tokens)),
                        "tokens": tokens,
                        "neighbor_id": ex.hit.id if ex.hit else None,
                        "distance": ex.hit.distance if ex.hit else None,
                    },
                    sort_keys=True,
                )
            )
        return atomic_write_text(out_path, "".join(line + "\n" for line in lines))

    def attend(
        self,
        out_path: PathLike,
        mode: Optional[RetrievalMode] = None,
        split: str = "test",
        limit: Optional[int] = None,
    ) -> Path:
        """Pesos de atención por ejemplo (regiones o estados ocultos y el par imagen/recuperado)"""
        mode = RetrievalMode(mode or self.config.model.retrieval_mode)
        model = self.restore(mode)
        examples = self.examples_for(split, mode)[:limit]
        lines = []
        for ex in examples:
            if self.task == "caption":
                _, trace = model.greedy_decode(ex.regions, ex.f_yn)
            else:
                _, trace = model.sentiment_forward(ex.token_ids, ex.f_yn)
            lines.append(json.dumps({"id": ex.id, "trace": trace.to_list()}, sort_keys=True))
        return atomic_write_text(out_path, "".join(line + "\n" for line in lines))

    def _target_view(self, payload: TargetPayload):
        if payload.caption is not None:
            return " ".join(self.vocab.decode(payload.caption))
        return payload.label

    def neighbors(self, out_path: PathLike, split: str = "test") -> Path:
        """
        Auditoría de la recuperación: target propio, vecino, distancia y target del
        vecino, más los ``index.k`` vecinos más cercanos en ``neighbors``
        """
        k = self.config.index.k
        training = split == "train"
        lines = []
        for ex in self.prepare(split, with_retrieval=True):
            exclude = {ex.id} if training and self.config.index.exclude_self else set()
            ranked = self.store.search(ex.query, k=k, exclude=exclude)
            lines.append(
                json.dumps(
                    {
                        "id": ex.id,
                        "target": self._target_view(self.target_payload(ex.record)),
                        "neighbor_id": ex.hit.id,
                        "distance": ex.hit.distance,
                        "neighbor_target": self._target_view(ex.neighbor_target),
                        "neighbors": [{"id": h.id, "distance": h.distance} for h in ranked],
                    },
                    sort_keys=True,
                )
            )
        return atomic_write_text(out_path, "".join(line + "\n" for line in lines))

    def ablate(self, modes: Sequence[RetrievalMode] = ALL_MODES, split: str = "test") -> AblationTable:
        def evaluate_mode(mode: RetrievalMode) -> Dict[str, float]:
            mode_dir = self.run_dir / "ablation" / mode.value
            self.train(mode, run_dir=mode_dir)
            return self.evaluate_model(self.restore(mode, run_dir=mode_dir), split)

        table = run_ablation(self.task, evaluate_mode, self.has_store(), modes)
        atomic_write_text(self.run_dir / "ablation.json", table.to_json() + "\n")
        atomic_write_text(self.run_dir / "ablation.txt", table.to_text())
        logger.info(f"Ablation table:\n{table.to_text()}")
        return table

    def synth(self, out_dir: Optional[PathLike] = None) -> SynthOutput:
        if self.config.synth is None:
            raise ConfigError("synth needs a synth section", pointer="/synth")
        target = Path(out_dir) if out_dir else self.run_dir / "synth"
        return synth_generate(self.config.synth, target)


def run_command(pipeline: RetrievalPipeline, command: str, **kwargs):
    """Ejecuta un comando registrando inicio y fin; los errores del dominio se re-lanzan"""
    logger.info(f"Command {command} started")
    try:
        handler = {
            "build-index": lambda: pipeline.build_index(),
            "train": lambda: pipeline.train(kwargs.get("mode")),
            "evaluate": lambda: pipeline.evaluate(kwargs.get("mode"), kwargs.get("split", "test")),
            "generate": lambda: pipeline.generate(kwargs["out"], kwargs.get("mode"), kwargs.get("split", "test")),
            "attend": lambda: pipeline.attend(
                kwargs["out"], kwargs.get("mode"), kwargs.get("split", "test"), kwargs.get("limit")
            ),
            "ablate": lambda: pipeline.ablate(split=kwargs.get("split", "test")),
            "neighbors": lambda: pipeline.neighbors(kwargs["out"], kwargs.get("split", "test")),
            "synth": lambda: pipeline.synth(kwargs.get("out")),
        }[command]
    except KeyError as e:
        raise ConfigError(f"unknown command {command!r}") from e
    try:
        result = handler()
    except RetrievalAugmentationError as e:
        logger.error(f"Command {command} failed: {e}")
        raise
    logger.info(f"Command {command} finished")
    return result
