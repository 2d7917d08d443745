import numpy as np
import pytest

from cardiorag.encoder import random_weights
from cardiorag.records import preprocess
from cardiorag.synth import lafb_record, low_hrv_record, normal_record, rbbb_record


@pytest.fixture(scope="session")
def weights():
    return random_weights(seed=0)


@pytest.fixture(scope="session")
def normal_pre():
    return preprocess(normal_record(age=50.0))


@pytest.fixture(scope="session")
def rbbb_pre():
    return preprocess(rbbb_record(age=61.0))


@pytest.fixture(scope="session")
def lafb_pre():
    return preprocess(lafb_record(age=55.0))


@pytest.fixture(scope="session")
def lowhrv_pre():
    return preprocess(low_hrv_record(age=47.0))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
