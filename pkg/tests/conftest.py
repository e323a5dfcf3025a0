import numpy as np
import pytest

from moldweight.data import GenConfig, generate_synthetic
from moldweight.model import ModelConfig, TrainConfig


@pytest.fixture(scope="session")
def small_dataset():
    ds, truth = generate_synthetic(GenConfig(n_molds=220, n_sequential=3, n_nonsequential=3,
                                             n_relevant_sequential=3, n_relevant_nonsequential=3), seed=11)
    return ds


@pytest.fixture(scope="session")
def default_dataset():
    ds, _ = generate_synthetic(seed=0)
    return ds


@pytest.fixture
def tiny_model_config():
    return ModelConfig(window=3, lstm_hidden=2, attention_dk=2, mlp_hidden=3)


@pytest.fixture
def quick_train():
    return TrainConfig(max_epochs=15, early_stop_patience=5, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
