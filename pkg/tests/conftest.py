import math
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rydiss import models

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TWO_PI = 2.0 * math.pi


@pytest.fixture
def interacting_pair_params():
    return models.PairParams(w=0.2, gamma=0.08, V=6.88)


@pytest.fixture(autouse=True)
def _quiet_reduction():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", models.ReductionWarning)
        yield


def _random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


@pytest.fixture
def random_hermitian():
    return _random_hermitian
