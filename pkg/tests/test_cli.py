# -*- coding: utf-8 -*-
import json
from pathlib import Path

import pytest

from config.schema import load_run_config
from main import main
from src.models.config import RetrievalMode
from src.services.retrieval_pipeline import RetrievalPipeline
from src.training.evaluation import bleu


def _write_config(tmp_path, task, synth, model, train=None):
    synth_dir = tmp_path / "synth"
    data = {
        "dataset": str(synth_dir / "dataset.jsonl"),
        "embeddings": str(synth_dir / "embeddings.vec"),
        "min_count": 1,
    }
    if task == "sentiment":
        data["sentence_embeddings"] = str(synth_dir / "sentence_embeddings.tsv")
    config = {
        "version": 1,
        "task": task,
        "run_dir": str(tmp_path / "run"),
        "data": data,
        "model": {"hidden_dim": 6, "attn_dim": 5, "dropout": 0.0, "seed": 2, **model},
        "train": {
            "batch_size": 4,
            "max_epochs": 2,
            "patience_decay": 1,
            "patience_stop": 2,
            **(train or {}),
        },
        "synth": {
            "task": task,
            "prototypes": 4,
            "dim": 4,
            "noise": 0.0,
            "train": 8,
            "val": 4,
            "test": 4,
            "word_pool": 6,
            "embed_dim": 5,
            "seed": 3,
            **synth,
        },
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return str(path), str(synth_dir)


def _read_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@pytest.fixture
def sentiment_run(tmp_path):
    config, synth_dir = _write_config(tmp_path, "sentiment", {}, {"target_mode": "plusminus"})
    assert main(["synth", "--config", config, "--out", synth_dir]) == 0
    assert main(["build-index", "--config", config]) == 0
    return config


@pytest.fixture
def caption_run(tmp_path):
    config, synth_dir = _write_config(
        tmp_path, "caption", {"regions": 1, "caption_length": 2}, {"max_len": 3}, {"max_epochs": 1}
    )
    assert main(["synth", "--config", config, "--out", synth_dir]) == 0
    assert main(["build-index", "--config", config]) == 0
    return config


class TestCli:
    """Comandos de la CLI sobre benchmarks sintéticos pequeños"""

    def test_evaluate_without_checkpoint_fails(self, sentiment_run, tmp_path):
        assert main(["evaluate", "--config", sentiment_run, "--mode", "m0_init"]) == 1
        assert not (tmp_path / "run" / "eval_m0_init_test.json").exists()

    def test_missing_config_fails(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.json")]) == 1

    def test_neighbors_share_the_label(self, sentiment_run, tmp_path):
        out = tmp_path / "neighbors.jsonl"
        argv = ["neighbors", "--config", sentiment_run, "--out", str(out), "--set", "index.k=3"]
        assert main(argv) == 0
        rows = _read_lines(out)
        assert len(rows) == 4
        for row in rows:
            assert row["distance"] == 0.0
            assert row["neighbor_target"] == row["target"]
            ranked = row["neighbors"]
            assert len(ranked) == 3
            assert ranked[0] == {"id": row["neighbor_id"], "distance": 0.0}
            distances = [hit["distance"] for hit in ranked]
            assert distances == sorted(distances)

    def test_train_evaluate_attend_sentiment(self, sentiment_run, tmp_path, capsys):
        assert main(["train", "--config", sentiment_run, "--mode", "m0_init"]) == 0
        assert (tmp_path / "run" / "best.rafm").exists()
        capsys.readouterr()

        assert main(["evaluate", "--config", sentiment_run, "--mode", "m0_init"]) == 0
        metrics = json.loads(capsys.readouterr().out)
        assert set(metrics) == {"accuracy", "f_score", "retrieval_accuracy"}
        assert metrics["retrieval_accuracy"] == 1.0
        assert 0.0 <= metrics["accuracy"] <= 1.0

        out = tmp_path / "attn.jsonl"
        argv = ["attend", "--config", sentiment_run, "--mode", "m0_init", "--out", str(out)]
        assert main(argv + ["--limit", "2"]) == 0
        rows = _read_lines(out)
        assert len(rows) == 2
        assert rows[0]["trace"][0]["token"] in ("positive", "negative")

    def test_mode_mismatch_with_checkpoint(self, sentiment_run):
        assert main(["train", "--config", sentiment_run]) == 0
        assert main(["evaluate", "--config", sentiment_run, "--mode", "combined"]) == 1

    def test_single_region_attention_is_one(self, caption_run, tmp_path):
        assert main(["train", "--config", caption_run]) == 0
        out = tmp_path / "attn.jsonl"
        assert main(["attend", "--config", caption_run, "--out", str(out), "--split", "val"]) == 0
        rows = _read_lines(out)
        assert len(rows) == 4
        for row in rows:
            assert 1 <= len(row["trace"]) <= 3
            assert all(step["alpha_regions"] == [1.0] for step in row["trace"])

    def test_generate_captions(self, caption_run, tmp_path):
        assert main(["train", "--config", caption_run]) == 0
        out = tmp_path / "captions.jsonl"
        assert main(["generate", "--config", caption_run, "--out", str(out)]) == 0
        rows = _read_lines(out)
        assert [row["id"] for row in rows] == [12, 13, 14, 15]
        assert all(len(row["tokens"]) <= 3 for row in rows)
        assert all(row["neighbor_id"] is None for row in rows)

    def test_generate_is_caption_only(self, sentiment_run, tmp_path):
        assert main(["generate", "--config", sentiment_run, "--out", str(tmp_path / "x.jsonl")]) == 1

    @pytest.mark.parametrize("metric, pick", [("bleu1", lambda s: s[0]), ("bleu_avg", lambda s: sum(s) / 4)])
    def test_caption_selection_follows_configured_order(self, caption_run, metric, pick):
        pipeline = RetrievalPipeline(load_run_config(caption_run, [f"train.selection_metric={metric}"]))
        model = pipeline.create_model(RetrievalMode.OFF)
        examples = pipeline.examples_for("val", RetrievalMode.OFF)
        refs = [ex.record.captions for ex in examples]
        scores = bleu(pipeline.decode_captions(model, examples), refs, 4)
        assert pipeline.selection_metric(model, examples) == pytest.approx(pick(scores))


@pytest.mark.slow
class TestSyntheticBenchmark:
    """Corrida completa: la recuperación revela la etiqueta del prototipo"""

    def test_retrieval_beats_chance(self, tmp_path, capsys):
        config, synth_dir = _write_config(
            tmp_path,
            "sentiment",
            {"prototypes": 16, "noise": 0.02, "train": 160, "val": 32, "test": 32, "word_pool": 12},
            {"target_mode": "plusminus", "hidden_dim": 16, "attn_dim": 16},
            {"max_epochs": 15, "patience_decay": 5, "patience_stop": 12, "lr": 0.01, "batch_size": 16},
        )
        assert main(["synth", "--config", config, "--out", synth_dir]) == 0
        assert main(["build-index", "--config", config]) == 0
        capsys.readouterr()
        assert main(["ablate", "--config", config]) == 0
        table = json.loads((tmp_path / "run" / "ablation.json").read_text(encoding="utf-8"))
        rows = {row["mode"]: row for row in table["rows"]}
        assert set(rows) == {"off", "m0_init", "multi_attn", "combined"}
        assert rows["m0_init"]["retrieval_accuracy"] >= 0.9
        assert rows["m0_init"]["accuracy"] >= 0.8


EXAMPLES_DIR = Path(__file__).resolve().parent.parent / "config" / "examples"


def _example_config(tmp_path, name, synth=None, model=None, train=None):
    """Copia un ejemplo de ``config/examples`` con las rutas bajo ``tmp_path``"""
    text = (EXAMPLES_DIR / f"{name}.json").read_text(encoding="utf-8")
    config = json.loads(text.replace(f"./runs/{name}", str(tmp_path / "run")))
    config["synth"].update(synth or {})
    config["model"].update(model or {})
    config["train"].update(train or {})
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    assert main(["synth", "--config", str(path)]) == 0
    assert main(["build-index", "--config", str(path)]) == 0
    return str(path)


def _train_and_evaluate(config, mode, split="test"):
    assert main(["train", "--config", config, "--mode", mode]) == 0
    assert main(["evaluate", "--config", config, "--mode", mode, "--split", split]) == 0
    run_dir = Path(json.loads(Path(config).read_text(encoding="utf-8"))["run_dir"])
    return json.loads((run_dir / f"eval_{mode}_{split}.json").read_text(encoding="utf-8"))


@pytest.mark.slow
class TestShippedBenchmarks:
    """Benchmarks sintéticos de ``config/examples`` de punta a punta"""

    def test_sentiment_ablation(self, tmp_path):
        config = _example_config(tmp_path, "synth_sentiment")
        assert main(["ablate", "--config", config]) == 0
        table = json.loads((tmp_path / "run" / "ablation.json").read_text(encoding="utf-8"))
        rows = {row["mode"]: row for row in table["rows"]}
        assert [row["mode"] for row in table["rows"]] == ["off", "m0_init", "multi_attn", "combined"]
        off = rows["off"]["accuracy"]
        assert rows["m0_init"]["accuracy"] >= off + 0.05
        assert rows["m0_init"]["accuracy"] >= 0.90
        assert rows["combined"]["accuracy"] >= off
        assert rows["m0_init"]["retrieval_accuracy"] >= 0.99

    def test_caption_memorizes_small_split(self, tmp_path):
        config = _example_config(
            tmp_path,
            "synth_caption",
            synth={"train": 50, "val": 16, "test": 16},
            train={"lr": 0.01, "max_epochs": 200, "patience_decay": 20, "patience_stop": 60},
        )
        metrics = _train_and_evaluate(config, "combined", split="train")
        assert metrics["bleu1"] >= 0.95

    def test_caption_retrieval_generalizes(self, tmp_path):
        # dos ejemplos de train por prototipo: el decoder casi no ve cada caption
        config = _example_config(
            tmp_path,
            "synth_caption",
            synth={"prototypes": 48, "train": 96, "val": 48, "test": 48},
            train={"lr": 0.004},
        )
        off = _train_and_evaluate(config, "off")
        combined = _train_and_evaluate(config, "combined")
        assert combined["bleu1"] >= off["bleu1"] + 0.10
