import numpy as np
import pytest

from diagnet.core.geometry import BBox, PatchGrid
from diagnet.data.synth import SynthSpec, gen_dataset
from diagnet.training.config import TrainConfig
from diagnet.training.optimizers import OptimizerKind


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv('DIAGNET_THREADS', '1')


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def grid():
    return PatchGrid(64, 8)


@pytest.fixture
def small_grid():
    return PatchGrid(32, 4)


@pytest.fixture
def box():
    return BBox(8, 12, 40, 44, class_id=1)


@pytest.fixture
def tiny_config():
    return TrainConfig(
        epochs=3,
        batch_size=2,
        h_in=32,
        h=4,
        channels=8,
        head_hidden=16,
        classes=3,
        optimizer=OptimizerKind.ADAM,
    ).validate()


@pytest.fixture
def tiny_scenes():
    return gen_dataset(0, 4, SynthSpec(h_in=32))
