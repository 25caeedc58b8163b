import numpy as np
import pytest
import torch

from relight.imaging import save_image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def torch_gen():
    return torch.Generator().manual_seed(1234)


@pytest.fixture
def random_image(rng):
    """A valid 16x16 RGB image away from the [0, 1] boundary."""
    return rng.uniform(0.05, 0.95, (16, 16, 3))


@pytest.fixture
def dataset_dir(tmp_path, rng):
    """A small on-disk dataset of three 32x32 low-light PNGs."""
    root = tmp_path / "data"
    root.mkdir()
    for i in range(3):
        save_image(rng.uniform(0.0, 0.3, (32, 32, 3)), root / f"img_{i}.png")
    return root
