# -*- coding: utf-8 -*-
import numpy as np
import pytest

from src.utils.metrics import reset_metrics


@pytest.fixture(autouse=True)
def clean_metrics():
    reset_metrics()
    yield
    reset_metrics()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
