import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oospa import datagen, pipeline
from oospa.losses import LossWeights
from oospa.model import ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TINY_MODEL = ModelConfig(
    hidden_dim=8,
    gnn_layers=2,
    proj_dim=4,
    readout_layers=2,
    readout_hidden=16,
    t_walk=4,
    l_rbf=6,
    seed=7,
)


@pytest.fixture(scope="session")
def small_dataset_path(tmp_path_factory):
    """10 orbital-optimized H4 records (random 3D), generated once."""
    path = tmp_path_factory.mktemp("data") / "h4_small.jsonl"
    datagen.generate_dataset("random_3d", 4, 10, seed=11, out_path=path)
    return path


@pytest.fixture(scope="session")
def tiny_train_dir(tmp_path_factory, small_dataset_path):
    """A very small trained model: enough for plumbing tests."""
    out_dir = tmp_path_factory.mktemp("train")
    cfg = pipeline.TrainConfig(
        lr0=1e-2,
        epochs=8,
        batch_size=4,
        weights=LossWeights(),
        model=TINY_MODEL,
        datasets=(str(small_dataset_path),),
        val_fraction=0.2,
        seed=3,
    )
    result = pipeline.train(cfg, out_dir)
    return {"cfg": cfg, "result": result, "dataset": small_dataset_path}


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_train_dir):
    return tiny_train_dir["result"].checkpoint_path
