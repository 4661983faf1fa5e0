# -*- coding: utf-8 -*-
"""
Bucle de entrenamiento: Adam por batches barajados, métrica de validación por
época, decaimiento de lr tras ``patience_decay`` épocas sin mejora y parada
tras ``patience_stop``. Guarda el checkpoint de la mejor época.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, TypeVar, Union

import numpy as np

from config.schema import TrainConfig
from config.settings import settings
from src.autodiff.optim import AdamState, adam_step
from src.autodiff.tensor import GradTape
from src.models.checkpoint import Model, save_checkpoint
from src.utils.atomic import atomic_write_text
from src.utils.exceptions import DatasetError
from src.utils.logger import setup_logger
from src.utils.metrics import record_latency

logger = setup_logger()

Example = TypeVar("Example")

BEST_CHECKPOINT = "best.rafm"
REPORTS_FILE = "epochs.jsonl"
REPORTS_TABLE = "epochs.txt"


def epoch_checkpoint_name(epoch: int) -> str:
    return f"epoch_{epoch}.rafm"


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    val_metric: float
    lr: float
    stopped: bool = False
    improved: bool = False
    decayed: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class ScheduleEvent:
    improved: bool
    decayed: bool
    stop: bool
    lr: float


class PlateauSchedule:
    """
    Mejora = estrictamente mayor que el mejor valor previo. El lr usado en la
    época k es el vigente al empezarla; el decaimiento rige desde la siguiente.
    """

    def __init__(self, lr: float, shrink: float = 0.8, patience_decay: int = 5, patience_stop: int = 12):
        self.lr = lr
        self.shrink = shrink
        self.patience_decay = patience_decay
        self.patience_stop = patience_stop
        self.best: Optional[float] = None
        self.bad_epochs = 0

    def update(self, metric: float) -> ScheduleEvent:
        if self.best is None or metric > self.best:
            self.best = metric
            self.bad_epochs = 0
            return ScheduleEvent(improved=True, decayed=False, stop=False, lr=self.lr)
        self.bad_epochs += 1
        decayed = self.bad_epochs % self.patience_decay == 0
        if decayed:
            self.lr *= self.shrink
        stop = self.bad_epochs >= self.patience_stop
        return ScheduleEvent(improved=False, decayed=decayed, stop=stop, lr=self.lr)


@dataclass
class TrainResult:
    best_checkpoint: Path
    best_metric: float
    reports: List[EpochReport] = field(default_factory=list)


def iterate_batches(
    examples: Sequence[Example], batch_size: int, rng: np.random.Generator
) -> List[List[Example]]:
    order = rng.permutation(len(examples))
    return [
        [examples[i] for i in order[start : start + batch_size]]
        for start in range(0, len(examples), batch_size)
    ]


def train_epoch(
    model: Model,
    batches: Sequence[Sequence[Example]],
    make_batch: Callable[[Sequence[Example], bool], object],
    state: AdamState,
    lr: float,
) -> float:
    """Una pasada sobre los batches; devuelve la pérdida media ponderada por tamaño"""
    total, seen = 0.0, 0
    for chunk in batches:
        batch = make_batch(chunk, True)
        with GradTape() as tape:
            tape.watch(model.params.values())
            loss = model.loss(batch, training=True)
        grads = tape.backward(loss)
        adam_step(model.params, grads, state, lr)
        total += loss.item() * len(chunk)
        seen += len(chunk)
    return total / max(seen, 1)


def format_reports(reports: Sequence[EpochReport]) -> str:
    header = f"{'epoch':>5}  {'train_loss':>10}  {'val_metric':>10}  {'lr':>10}  events"
    lines = [header]
    for r in reports:
        events = ",".join(
            name for name, flag in (("best", r.improved), ("decay", r.decayed), ("stop", r.stopped)) if flag
        )
        lines.append(f"{r.epoch:>5}  {r.train_loss:>10.6f}  {r.val_metric:>10.6f}  {r.lr:>10.3g}  {events}")
    return "\n".join(lines) + "\n"


def train(
    model: Model,
    train_examples: Sequence[Example],
    make_batch: Callable[[Sequence[Example], bool], object],
    validate: Callable[[Model], float],
    cfg: TrainConfig,
    run_dir: Union[str, Path],
    lr: float,
    meta: Optional[dict] = None,
) -> TrainResult:
    """
    Entrena ``model`` en sitio y devuelve la ruta del mejor checkpoint junto
    con los reportes por época. ``validate`` calcula la métrica de selección
    (BLEU-4 o accuracy) sobre el split de validación.
    """
    if len(train_examples) == 0:
        raise DatasetError("training split is empty")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    best_path = run_dir / BEST_CHECKPOINT

    rng = np.random.default_rng(cfg.seed)
    schedule = PlateauSchedule(lr, cfg.shrink, cfg.patience_decay, cfg.patience_stop)
    state = AdamState()
    reports: List[EpochReport] = []
    meta = dict(meta or {})

    logger.info(
        f"Training {model.task} model ({model.mode.value}): {len(train_examples)} examples, "
        f"{model.params.count()} trainable values, lr={lr}, batch={cfg.batch_size}"
    )
    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        epoch_lr = schedule.lr
        batches = iterate_batches(train_examples, cfg.batch_size, rng)
        train_loss = train_epoch(model, batches, make_batch, state, epoch_lr)
        metric = float(validate(model))
        event = schedule.update(metric)

        report = EpochReport(
            epoch=epoch,
            train_loss=train_loss,
            val_metric=metric,
            lr=epoch_lr,
            stopped=event.stop,
            improved=event.improved,
            decayed=event.decayed,
        )
        reports.append(report)
        epoch_meta = {**meta, "epoch": epoch, "val_metric": metric}
        if cfg.keep_epoch_checkpoints:
            save_checkpoint(model, run_dir / epoch_checkpoint_name(epoch), epoch_meta)
        if event.improved:
            save_checkpoint(model, best_path, epoch_meta)

        record_latency("epoch", (time.perf_counter() - started) * 1000, settings.epoch_sla_ms)
        logger.info(
            f"Epoch {epoch}: loss={train_loss:.6f} val={metric:.6f} lr={epoch_lr:.3g}"
            + (" [best]" if event.improved else "")
            + (f" [lr -> {event.lr:.3g}]" if event.decayed else "")
        )
        if event.stop:
            logger.info(f"Early stopping after {schedule.bad_epochs} epochs without improvement")
            break

    atomic_write_text(run_dir / REPORTS_FILE, "".join(r.to_json() + "\n" for r in reports))
    atomic_write_text(run_dir / REPORTS_TABLE, format_reports(reports))
    logger.info(f"Best validation metric {schedule.best:.6f}; checkpoint at {best_path}")
    return TrainResult(best_checkpoint=best_path, best_metric=float(schedule.best), reports=reports)
