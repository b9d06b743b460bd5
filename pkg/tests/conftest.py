import numpy as np
import pytest

from builders import ensemble_of, majority_of_three, separable_dataset, stump, write_separable_csv
from distance.functions import DistanceSpec
from focus.engine import FocusConfig
from softmodel.soft import SoftConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def stump_model():
    """One feature, threshold 0.5, class 1 above it"""
    return ensemble_of(stump(0.5))


@pytest.fixture
def three_stumps():
    return majority_of_three()


@pytest.fixture
def separable():
    return separable_dataset()


@pytest.fixture
def euclidean():
    return DistanceSpec(kind="euclidean")


@pytest.fixture
def focus_config(euclidean):
    return FocusConfig(soft=SoftConfig(sigma=5.0, tau=1.0), beta=0.001, alpha=0.001,
                       distance=euclidean, iterations=1000)


@pytest.fixture
def raw_csv(tmp_path):
    return write_separable_csv(tmp_path / "raw.csv")
