import numpy as np
import pytest

from memnoise.core import pauli


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def X():
    return pauli("X").matrix


@pytest.fixture
def Z():
    return pauli("Z").matrix


def trace_distance(a, b):
    return 0.5 * np.abs(np.linalg.eigvalsh(np.asarray(a) - np.asarray(b))).sum()
