import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from action_core.dataset import gen_direction_dataset  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset():
    """Four classes, three clean videos each, 16x16 frames."""
    return gen_direction_dataset(3, frames=16, height=16, width=16, noise=0.0, seed=7, max_workers=2)


@pytest.fixture(scope="session")
def tiny_val_dataset():
    return gen_direction_dataset(2, frames=16, height=16, width=16, noise=0.0, seed=7, split="val", max_workers=2)
