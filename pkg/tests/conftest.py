import numpy as np
import pytest


def random_gains(rng, n=None, mean=1.0):
    """Exponential link gains, shape (4,) or (n, 4)."""
    shape = (4,) if n is None else (n, 4)
    return rng.exponential(mean, size=shape)


def random_miso(rng, Nt=2):
    from ncoop.channel import MisoChannel
    h = (rng.normal(size=(4, Nt)) + 1j * rng.normal(size=(4, Nt))) / np.sqrt(2)
    return MisoChannel.from_array(h)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
