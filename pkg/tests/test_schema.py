# -*- coding: utf-8 -*-
import json
from pathlib import Path

import pytest

from config.schema import apply_overrides, load_run_config, parse_run_config
from config.settings import settings
from src.models.config import RetrievalMode
from src.models.target_encoders import TargetMode
from src.storage.example_store import Metric
from src.utils.exceptions import ConfigError


class TestRunConfig:
    """Validación de la configuración de una corrida"""

    def test_defaults(self):
        config = parse_run_config({"task": "sentiment", "run_dir": "runs/x"})
        assert config.model.retrieval_mode is RetrievalMode.OFF
        assert config.target_mode is TargetMode.CLASS_AVG
        assert config.train.lr_for("sentiment") == 1e-3
        assert config.train.metric_for("sentiment") == "accuracy"
        assert config.index.metric is Metric.L2
        assert config.index_path == Path("runs/x") / "index.rknn"
        assert (config.train.patience_decay, config.train.patience_stop, config.train.shrink) == (5, 12, 0.8)

    def test_caption_defaults(self):
        config = parse_run_config({"task": "caption"})
        assert config.target_mode is TargetMode.WEIGHTED
        assert config.train.lr_for("caption") == 4e-4
        assert config.train.metric_for("caption") == "bleu4"

    @pytest.mark.parametrize("metric", ["bleu1", "bleu2", "bleu3", "bleu4", "bleu_avg"])
    def test_caption_selection_metrics(self, metric):
        config = parse_run_config({"task": "caption", "train": {"selection_metric": metric}})
        assert config.train.metric_for("caption") == metric

    def test_process_settings_fill_defaults(self, monkeypatch):
        monkeypatch.setattr(settings, "default_seed", 77)
        monkeypatch.setattr(settings, "runs_path", "/tmp/rknn-runs")
        config = parse_run_config({"task": "sentiment", "synth": {}})
        assert config.train.seed == 77
        assert config.synth.seed == 77
        assert config.run_path == Path("/tmp/rknn-runs") / "default"
        assert parse_run_config({"task": "sentiment", "train": {"seed": 5}}).train.seed == 5

    @pytest.mark.parametrize(
        "data, pointer",
        [
            ({"task": "caption", "train": {"shrink": 1.5}}, "/train/shrink"),
            ({"task": "caption", "train": {"patience_decay": 12}}, "/train"),
            ({"task": "caption", "model": {"retrieval_mode": "sometimes"}}, "/model/retrieval_mode"),
            ({"task": "caption", "model": {"target_mode": "plusminus"}}, "/model/target_mode"),
            ({"task": "sentiment", "synth": {"task": "caption"}}, "/synth/task"),
            ({"task": "sentiment", "synth": {"prototypes": 1}}, "/synth/prototypes"),
            ({"task": "sentiment", "index": {"bogus": 1}}, "/index/bogus"),
            ({"task": "other"}, "/task"),
            ({"task": "caption", "train": {"selection_metric": "accuracy"}}, "/train/selection_metric"),
            ({"task": "sentiment", "train": {"selection_metric": "bleu1"}}, "/train/selection_metric"),
            ({"task": "caption", "train": {"selection_metric": "bleu5"}}, "/train/selection_metric"),
        ],
    )
    def test_errors_name_the_field(self, data, pointer):
        with pytest.raises(ConfigError) as info:
            parse_run_config(data)
        assert info.value.pointer == pointer
        assert str(info.value).startswith(pointer)

    def test_with_mode(self):
        config = parse_run_config({"task": "sentiment"})
        combined = config.with_mode("combined")
        assert combined.model.retrieval_mode is RetrievalMode.COMBINED
        assert config.model.retrieval_mode is RetrievalMode.OFF

    def test_require_data(self):
        with pytest.raises(ConfigError) as info:
            parse_run_config({"task": "sentiment"}).require_data()
        assert info.value.pointer == "/data"


class TestOverrides:
    """Overrides ``--set seccion.campo=valor``"""

    def test_values_are_parsed_as_json_when_possible(self):
        data = apply_overrides(
            {"task": "caption"},
            ["train.lr=0.01", "model.retrieval_mode=combined", "index.exclude_self=false"],
        )
        assert data["train"]["lr"] == 0.01
        assert data["model"]["retrieval_mode"] == "combined"
        assert data["index"]["exclude_self"] is False

    def test_malformed_overrides(self):
        with pytest.raises(ConfigError):
            apply_overrides({}, ["train.lr"])
        with pytest.raises(ConfigError):
            apply_overrides({}, ["=3"])
        with pytest.raises(ConfigError) as info:
            apply_overrides({"task": "caption"}, ["task.name=x"])
        assert info.value.pointer == "/task"

    def test_load_with_mode_and_seed(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"task": "sentiment", "train": {"max_epochs": 3}}), encoding="utf-8")
        config = load_run_config(path, ["train.batch_size=4"], mode="m0_init", seed=99)
        assert config.model.retrieval_mode is RetrievalMode.M0_INIT
        assert (config.train.seed, config.model.seed) == (99, 99)
        assert (config.train.batch_size, config.train.max_epochs) == (4, 3)

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{\n  \"task\": ,\n}", encoding="utf-8")
        with pytest.raises(ConfigError, match="line 2"):
            load_run_config(bad)
        listing = tmp_path / "list.json"
        listing.write_text("[]", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_run_config(listing)
