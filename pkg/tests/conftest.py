import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from diskmin import ExtremalPoint, make_nilpotent_kepler

import oracles


@pytest.fixture(scope="session")
def kepler():
    return make_nilpotent_kepler()


@pytest.fixture(scope="session")
def ref_point():
    return ExtremalPoint(x=oracles.REF_X0.copy(), p=oracles.REF_P0.copy())


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
