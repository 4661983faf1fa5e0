# -*- coding: utf-8 -*-
"""
Esquema versionado de la configuración de una corrida (JSON).

Los errores de validación se convierten en ``ConfigError`` cuyo mensaje
empieza con el JSON pointer del campo inválido, p. ej. ``/train/shrink``.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.models.config import RetrievalMode
from src.models.target_encoders import CAPTION_MODES, SENTIMENT_MODES, TargetMode
from config.settings import settings
from src.storage.example_store import Metric
from src.utils.exceptions import ConfigError
from src.utils.logger import setup_logger

logger = setup_logger()

SCHEMA_VERSION = 1
Task = Literal["caption", "sentiment"]

DEFAULT_LR = {"caption": 4e-4, "sentiment": 1e-3}
DEFAULT_SELECTION = {"caption": "bleu4", "sentiment": "accuracy"}
CAPTION_METRICS = ("bleu1", "bleu2", "bleu3", "bleu4", "bleu_avg")
SelectionMetric = Literal["bleu1", "bleu2", "bleu3", "bleu4", "bleu_avg", "accuracy"]
DEFAULT_TARGET_MODE = {"caption": TargetMode.WEIGHTED, "sentiment": TargetMode.CLASS_AVG}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataConfig(_Section):
    dataset: str
    embeddings: str
    features_dir: Optional[str] = None
    sentence_embeddings: Optional[str] = None
    caption_embeddings: Optional[str] = None
    min_count: int = Field(default=5, ge=1)


class IndexConfig(_Section):
    path: Optional[str] = None
    metric: Metric = Metric.L2
    exclude_self: bool = True
    target_selection: Literal["first", "longest"] = "first"
    k: int = Field(default=1, ge=1)


class ModelSection(_Section):
    retrieval_mode: RetrievalMode = RetrievalMode.OFF
    target_mode: Optional[TargetMode] = None
    hidden_dim: int = Field(default=512, gt=0)
    attn_dim: int = Field(default=512, gt=0)
    dropout: float = Field(default=0.5, ge=0.0, lt=1.0)
    finetune_embeddings: bool = False
    projection_bias: bool = True
    max_len: int = Field(default=20, ge=1)
    seed: int = 0


class TrainConfig(_Section):
    """Receta de entrenamiento: Adam, batches de 32, decaimiento y parada temprana"""

    lr: Optional[float] = Field(default=None, gt=0.0)
    batch_size: int = Field(default=32, ge=1)
    patience_stop: int = Field(default=12, ge=1)
    patience_decay: int = Field(default=5, ge=1)
    shrink: float = Field(default=0.8, gt=0.0, lt=1.0)
    max_epochs: int = Field(default=30, ge=1)
    seed: int = Field(default_factory=lambda: settings.default_seed)
    selection_metric: Optional[SelectionMetric] = None
    keep_epoch_checkpoints: bool = True

    @model_validator(mode="after")
    def _patience_order(self) -> "TrainConfig":
        if self.patience_decay >= self.patience_stop:
            raise ValueError(
                f"patience_decay ({self.patience_decay}) must be smaller than "
                f"patience_stop ({self.patience_stop})"
            )
        return self

    def lr_for(self, task: str) -> float:
        return self.lr if self.lr is not None else DEFAULT_LR[task]

    def metric_for(self, task: str) -> str:
        return self.selection_metric or DEFAULT_SELECTION[task]


class SynthSpec(_Section):
    """Benchmark sintético: prototipos + ruido gaussiano, target copiado del prototipo"""

    task: Task = "sentiment"
    prototypes: int = Field(default=256, ge=2)
    dim: int = Field(default=16, ge=1)
    noise: float = Field(default=0.05, ge=0.0)
    prototype_scale: float = Field(default=1.0, gt=0.0)
    train: int = Field(default=2000, ge=1)
    val: int = Field(default=500, ge=0)
    test: int = Field(default=500, ge=0)
    seed: int = Field(default_factory=lambda: settings.default_seed)
    regions: int = Field(default=4, ge=1)
    embed_dim: int = Field(default=16, ge=1)
    word_pool: int = Field(default=24, ge=3)
    caption_length: int = Field(default=3, ge=1)
    sentence_length: int = Field(default=6, ge=1)
    token_noise: float = Field(default=0.1, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _enough_captions(self) -> "SynthSpec":
        if self.task == "caption" and self.word_pool**self.caption_length < self.prototypes:
            raise ValueError(
                f"word_pool={self.word_pool} cannot give {self.prototypes} distinct captions "
                f"of length {self.caption_length}"
            )
        return self


class RunConfig(_Section):
    version: Literal[1] = SCHEMA_VERSION
    task: Task
    run_dir: str = Field(default_factory=lambda: str(Path(settings.runs_path) / "default"))
    data: Optional[DataConfig] = None
    index: IndexConfig = Field(default_factory=IndexConfig)
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainConfig = Field(default_factory=TrainConfig)
    synth: Optional[SynthSpec] = None

    @property
    def run_path(self) -> Path:
        return Path(self.run_dir)

    @property
    def index_path(self) -> Path:
        return Path(self.index.path) if self.index.path else self.run_path / "index.rknn"

    @property
    def target_mode(self) -> TargetMode:
        return self.model.target_mode or DEFAULT_TARGET_MODE[self.task]

    def require_data(self) -> DataConfig:
        if self.data is None:
            raise ConfigError("this command needs a data section", pointer="/data")
        return self.data

    def with_mode(self, mode: Union[RetrievalMode, str]) -> "RunConfig":
        model = self.model.model_copy(update={"retrieval_mode": RetrievalMode(mode)})
        return self.model_copy(update={"model": model})


# ======= CARGA Y OVERRIDES =======


def _pointer(loc: Iterable[Any]) -> str:
    return "/" + "/".join(str(part) for part in loc)


def _check_cross_fields(config: RunConfig) -> None:
    if config.model.target_mode is not None:
        allowed = CAPTION_MODES if config.task == "caption" else SENTIMENT_MODES
        if config.model.target_mode not in allowed:
            raise ConfigError(
                f"{config.model.target_mode.value!r} is not valid for task {config.task!r}; "
                f"use one of {sorted(m.value for m in allowed)}",
                pointer="/model/target_mode",
            )
    metric = config.train.selection_metric
    if metric is not None and (metric in CAPTION_METRICS) != (config.task == "caption"):
        allowed = CAPTION_METRICS if config.task == "caption" else ("accuracy",)
        raise ConfigError(
            f"selection metric {metric!r} is not valid for task {config.task!r}; "
            f"use one of {list(allowed)}",
            pointer="/train/selection_metric",
        )
    if config.synth is not None and config.synth.task != config.task:
        raise ConfigError(
            f"synth task {config.synth.task!r} differs from run task {config.task!r}",
            pointer="/synth/task",
        )


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        raise ConfigError(err["msg"], pointer=_pointer(err["loc"])) from e
    _check_cross_fields(config)
    return config


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Aplica ``seccion.campo=valor``; el valor se interpreta como JSON si es posible"""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like path.to.field=value")
        dotted, raw = item.split("=", 1)
        parts = [p for p in dotted.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"override {item!r} has an empty path")
        node = data
        for depth, part in enumerate(parts[:-1]):
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(
                    "cannot set a field below a scalar", pointer=_pointer(parts[: depth + 1])
                )
            node = child
        node[parts[-1]] = _parse_value(raw)
    return data


def load_run_config(
    path: Union[str, Path],
    overrides: Iterable[str] = (),
    mode: Optional[str] = None,
    seed: Optional[int] = None,
) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")

    overrides: List[str] = list(overrides)
    if mode is not None:
        overrides.append(f"model.retrieval_mode={json.dumps(mode)}")
    if seed is not None:
        overrides += [f"train.seed={seed}", f"model.seed={seed}"]
    config = parse_run_config(apply_overrides(data, overrides))
    logger.info(
        f"Loaded run config {path} (task={config.task}, mode={config.model.retrieval_mode.value}, "
        f"run_dir={config.run_dir})"
    )
    return config
