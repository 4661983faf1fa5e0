# -*- coding: utf-8 -*-
import numpy as np
import pytest

from src.models.captioning import CaptionModel
from src.models.checkpoint import (
    decode_checkpoint,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from src.models.config import RetrievalMode
from src.models.sentiment import SentimentModel
from src.utils.exceptions import CheckpointError, DimensionError, FormatError
from tests.factories import caption_config, sentiment_config


class TestCheckpoint:
    """Persistencia bit a bit de los modelos"""

    def test_caption_round_trip_is_exact(self, tmp_path, rng):
        model = CaptionModel(caption_config(RetrievalMode.COMBINED))
        path = save_checkpoint(model, tmp_path / "best.rafm", {"epoch": 3})

        restored = restore_model(path)
        assert isinstance(restored, CaptionModel)
        assert restored.config == model.config
        for name, value in model.state_dict().items():
            assert np.array_equal(restored.state_dict()[name], value)

        V, f = rng.normal(size=(4, 7)), rng.normal(size=6)
        assert restored.greedy_decode(V, f)[0] == model.greedy_decode(V, f)[0]
        assert load_checkpoint(path).meta == {"epoch": 3}

    def test_sentiment_round_trip_with_finetuned_embeddings(self, tmp_path):
        model = SentimentModel(sentiment_config(RetrievalMode.M0_INIT, finetune_embeddings=True))
        model.params["embedding"].data[4] = 7.0
        restored = restore_model(save_checkpoint(model, tmp_path / "s.rafm"))
        assert isinstance(restored, SentimentModel)
        assert np.all(restored.params["embedding"].numpy()[4] == 7.0)
        f = np.ones(8)
        assert restored.sentiment_forward([4, 5], f)[0] == model.sentiment_forward([4, 5], f)[0]

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(CheckpointError):
            restore_model(tmp_path / "missing.rafm")

    def test_corrupt_bytes(self, tmp_path):
        raw = save_checkpoint(CaptionModel(caption_config()), tmp_path / "c.rafm").read_bytes()
        with pytest.raises(FormatError):
            decode_checkpoint(b"XXXX" + raw[4:])
        with pytest.raises(FormatError):
            decode_checkpoint(raw[:-3])
        with pytest.raises(FormatError):
            decode_checkpoint(raw + b"\x00")

    def test_state_from_another_mode_is_rejected(self):
        off = CaptionModel(caption_config())
        combined = CaptionModel(caption_config(RetrievalMode.COMBINED))
        with pytest.raises(DimensionError):
            combined.load_state_dict(off.state_dict())
