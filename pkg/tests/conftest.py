import numpy as np
import pytest

from chimera.genome import SearchBounds, random_genome


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def bounds():
    return SearchBounds()


def random_genomes(count, bounds=None, seed=1):
    generator = np.random.default_rng(seed)
    bounds = bounds or SearchBounds()
    return [random_genome(bounds, generator) for _ in range(count)]
