# -*- coding: utf-8 -*-
import json

import numpy as np
import pytest

from config.schema import TrainConfig
from src.models.checkpoint import load_checkpoint
from src.models.config import PAD_ID, RetrievalMode
from src.models.sentiment import SentimentBatch, SentimentModel
from src.training.ablation import AblationRow, AblationTable, run_ablation
from src.training.trainer import (
    BEST_CHECKPOINT,
    REPORTS_FILE,
    REPORTS_TABLE,
    PlateauSchedule,
    epoch_checkpoint_name,
    iterate_batches,
    train,
)
from src.utils.exceptions import ConfigError, DatasetError
from src.utils.metrics import get_average_latency
from tests.factories import sentiment_config

EXAMPLES = [([4, 5, 6], 1), ([7, 8], 0), ([9, 4], 1), ([10], 0)]


def _make_batch(chunk, training=True):
    T = max(len(tokens) for tokens, _ in chunk)
    tokens = np.full((len(chunk), T), PAD_ID)
    mask = np.zeros((len(chunk), T), dtype=bool)
    for row, (ids, _) in enumerate(chunk):
        tokens[row, : len(ids)] = ids
        mask[row, : len(ids)] = True
    labels = np.array([label for _, label in chunk], dtype=np.float64)
    return SentimentBatch(tokens=tokens, mask=mask, labels=labels)


class TestPlateauSchedule:
    """Decaimiento y parada temprana por meseta"""

    def test_frozen_metric(self):
        schedule = PlateauSchedule(1.0, shrink=0.8, patience_decay=5, patience_stop=12)
        events = [schedule.update(0.3) for _ in range(13)]
        assert events[0].improved
        assert [i + 1 for i, e in enumerate(events) if e.decayed] == [6, 11]
        assert [i + 1 for i, e in enumerate(events) if e.stop] == [13]
        assert schedule.lr == pytest.approx(0.64)

    def test_improvement_must_be_strict(self):
        schedule = PlateauSchedule(1.0)
        schedule.update(0.5)
        assert not schedule.update(0.5).improved
        assert schedule.update(0.51).improved
        assert schedule.bad_epochs == 0
        assert schedule.best == 0.51


class TestTrain:
    """Bucle de entrenamiento"""

    def test_frozen_validation_stops_after_patience(self, tmp_path):
        model = SentimentModel(sentiment_config())
        cfg = TrainConfig(batch_size=2, max_epochs=30, seed=1)
        result = train(model, EXAMPLES, _make_batch, lambda m: 0.25, cfg, tmp_path, lr=0.01)

        assert len(result.reports) == 13
        assert result.reports[-1].stopped
        assert [r.epoch for r in result.reports if r.decayed] == [6, 11]
        assert result.reports[5].lr == pytest.approx(0.01)
        assert result.reports[6].lr == pytest.approx(0.008)
        assert result.reports[11].lr == pytest.approx(0.0064)
        assert result.best_metric == 0.25
        assert result.best_checkpoint == tmp_path / BEST_CHECKPOINT
        assert load_checkpoint(result.best_checkpoint).meta["epoch"] == 1
        assert (tmp_path / epoch_checkpoint_name(13)).exists()
        lines = (tmp_path / REPORTS_FILE).read_text(encoding="utf-8").splitlines()
        assert [json.loads(line)["epoch"] for line in lines] == list(range(1, 14))
        assert "stop" in (tmp_path / REPORTS_TABLE).read_text(encoding="utf-8")
        assert get_average_latency("epoch") > 0.0

    def test_best_checkpoint_follows_validation(self, tmp_path):
        model = SentimentModel(sentiment_config())
        scores = iter([0.1, 0.4, 0.2])
        cfg = TrainConfig(batch_size=4, max_epochs=3, keep_epoch_checkpoints=False)
        result = train(model, EXAMPLES, _make_batch, lambda m: next(scores), cfg, tmp_path, lr=0.01)
        assert result.best_metric == 0.4
        assert load_checkpoint(result.best_checkpoint).meta["epoch"] == 2
        assert not (tmp_path / epoch_checkpoint_name(1)).exists()

    def test_same_seed_gives_same_parameters(self, tmp_path):
        cfg = TrainConfig(batch_size=2, max_epochs=2, seed=7)
        states = []
        for run in ("a", "b"):
            model = SentimentModel(sentiment_config(dropout=0.3))
            train(model, EXAMPLES, _make_batch, lambda m: 0.0, cfg, tmp_path / run, lr=0.01)
            states.append(model.state_dict())
        for name, value in states[0].items():
            assert np.array_equal(states[1][name], value)

    def test_training_reduces_loss(self, tmp_path):
        model = SentimentModel(sentiment_config())
        cfg = TrainConfig(batch_size=4, max_epochs=40, patience_stop=50, patience_decay=45)
        result = train(model, EXAMPLES, _make_batch, lambda m: 0.0, cfg, tmp_path, lr=0.02)
        assert result.reports[-1].train_loss < result.reports[0].train_loss

    def test_empty_training_split(self, tmp_path):
        model = SentimentModel(sentiment_config())
        with pytest.raises(DatasetError):
            train(model, [], _make_batch, lambda m: 0.0, TrainConfig(), tmp_path, 0.01)

    def test_iterate_batches_covers_every_example(self, rng):
        batches = iterate_batches(list(range(10)), 4, rng)
        assert [len(b) for b in batches] == [4, 4, 2]
        assert sorted(x for b in batches for x in b) == list(range(10))


class TestAblation:
    """Tabla de ablación por modo"""

    def test_runs_every_mode(self):
        seen = []

        def evaluate_mode(mode):
            seen.append(mode)
            return {"accuracy": float(len(seen))}

        table = run_ablation("sentiment", evaluate_mode, store_available=True)
        assert seen == list(RetrievalMode)
        assert table.row("combined").metrics["accuracy"] == 4.0
        assert json.loads(table.to_json())["rows"][0] == {"mode": "off", "accuracy": 1.0}

    def test_retrieval_modes_need_a_store(self):
        with pytest.raises(ConfigError):
            run_ablation("caption", lambda m: {}, store_available=False)
        table = run_ablation("caption", lambda m: {"bleu4": 0.0}, False, modes=["off"])
        assert [r.mode for r in table.rows] == ["off"]

    def test_text_table(self):
        table = AblationTable(
            "caption",
            [AblationRow("off", {"bleu1": 0.5}), AblationRow("m0_init", {"bleu1": 0.25, "bleu4": 0.1})],
        )
        lines = table.to_text().splitlines()
        assert lines[0].split() == ["mode", "bleu1", "bleu4"]
        assert lines[1].split() == ["off", "0.5000", "-"]
        assert lines[2].split() == ["m0_init", "0.2500", "0.1000"]
