import numpy as np
import pytest

from tsencoder.data import synth_corpus
from tsencoder.encoder import EncoderConfig, build

TINY = EncoderConfig(filters=(8, 16, 32), k=8)


@pytest.fixture
def tiny_config():
    return TINY


@pytest.fixture
def tiny_params():
    return build(TINY, np.random.default_rng(0))


@pytest.fixture(scope="session")
def small_corpus():
    # 2 types x 2 datasets, short series: fast enough for unit tests
    return synth_corpus(n_types=2, datasets_per_type=2, classes=3, instances=24,
                        length_range=(32, 40), seed=3)
