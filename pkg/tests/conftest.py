import numpy as np
import pytest

from rotcloud.pcdata import generate_dataset, generate_shape, load_split
from rotcloud.schemas import Split


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_data_dir(tmp_path_factory):
    """Two categories, four training and two test clouds each, 64 points per cloud."""
    out = tmp_path_factory.mktemp("tiny_data")
    generate_dataset(out, categories=2, train=4, test=2, points=64, seed=0)
    return out


@pytest.fixture(scope="session")
def tiny_train(tiny_data_dir):
    return load_split(tiny_data_dir, Split.TRAIN)


@pytest.fixture(scope="session")
def tiny_test(tiny_data_dir):
    return load_split(tiny_data_dir, Split.TEST)


@pytest.fixture
def cube_cloud():
    return generate_shape("cube", 128, np.random.default_rng(7))
