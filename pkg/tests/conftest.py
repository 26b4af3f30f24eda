import numpy as np
import pytest

from mblbfgs import logistic_l2, make_synthetic, sigmoid_lsq


@pytest.fixture(scope="session")
def sep_dataset():
    """The pinned strongly convex problem: separable, n=5000, d=20."""
    return make_synthetic(5000, 20, 10, seed=7, separable_margin=1.0)


@pytest.fixture(scope="session")
def sep_logistic(sep_dataset):
    return logistic_l2(sep_dataset)  # sigma = 1/n


@pytest.fixture(scope="session")
def sep_sigmoid(sep_dataset):
    return sigmoid_lsq(sep_dataset)


@pytest.fixture(scope="session")
def cond_dataset():
    """Ill-conditioned low-margin variant (feature scales over 2 decades)."""
    return make_synthetic(5000, 20, 10, seed=7, separable_margin=0.05,
                          feature_decades=2.0)


@pytest.fixture(scope="session")
def cond_logistic(cond_dataset):
    return logistic_l2(cond_dataset)


@pytest.fixture(scope="session")
def small_dataset():
    return make_synthetic(300, 12, 6, seed=11, separable_margin=0.5)


@pytest.fixture(scope="session")
def small_logistic(small_dataset):
    return logistic_l2(small_dataset)


def random_admitted_memory(rng, d, m, n_pairs, eps=1e-4, spectrum=None):
    """Fill a memory with pairs y = A s from a synthetic SPD map A."""
    from mblbfgs import LbfgsMemory

    if spectrum is None:
        diag = rng.uniform(0.5, 3.0, size=d)
    else:
        diag = np.linspace(spectrum[0], spectrum[1], d)
    mem = LbfgsMemory(m, scaling="bb", cautious_eps=eps)
    for _ in range(n_pairs):
        s = rng.standard_normal(d)
        y = diag * s
        mem.admit(s, y)
    return mem
