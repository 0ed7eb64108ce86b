import sys
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = REPO_ROOT / "data" / "mnist"

sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture
def rng():
    return np.random.default_rng(421)


@pytest.fixture(scope="session")
def mnist_train():
    from memdbn.dataset import load_mnist
    return load_mnist(DATA_DIR, "train")


@pytest.fixture(scope="session")
def mnist_test():
    from memdbn.dataset import load_mnist
    return load_mnist(DATA_DIR, "test")


@pytest.fixture(scope="session")
def desk_data(mnist_train, mnist_test):
    """Binarized stratified desk-scale splits: 10k train / 2k test."""
    from memdbn.dataset import binarize_dataset, subset
    train = binarize_dataset(subset(mnist_train, 10_000, seed=1234))
    test = binarize_dataset(subset(mnist_test, 2_000, seed=1234))
    return train, test


@pytest.fixture(scope="session")
def micro_data(mnist_train, mnist_test):
    """Tiny splits for fast structural tests."""
    from memdbn.dataset import binarize_dataset, subset
    train = binarize_dataset(subset(mnist_train, 600, seed=5))
    test = binarize_dataset(subset(mnist_test, 200, seed=5))
    return train, test
