import numpy as np
import pytest

from manifold_ilpr import linalg


def make_rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def random_sym(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) * scale
    return (a + a.T) / 2.0


def random_spd(rng, n, scale=0.5):
    # log-eigenvalues stay within +-(scale * few), keeping conditioning mild
    return linalg.sym_expm(random_sym(rng, n, scale))


def random_spd_stack(rng, count, n, scale=0.5):
    return np.stack([random_spd(rng, n, scale) for _ in range(count)])


@pytest.fixture
def rng():
    return make_rng(20240817)
