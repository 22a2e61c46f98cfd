import numpy as np
import pytest

from scar.data import gen_two_moons, split_semi
from scar.model import MlpSpec, init_classifier


@pytest.fixture
def moons_split():
    return split_semi(gen_two_moons(200, 0.1, seed=3), 10, seed=3)


@pytest.fixture
def small_model():
    return init_classifier(MlpSpec((2, 8, 2)), seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
