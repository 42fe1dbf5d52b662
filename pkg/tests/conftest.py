import numpy as np
import pytest

from tmfm import DgpSpec, simulate_dataset


@pytest.fixture(scope="session")
def small_random():
    """A small generic dataset with no factor structure."""
    rng = np.random.default_rng(314)
    X = rng.standard_normal((120, 5, 4))
    z = rng.standard_normal(120)
    return X, z


@pytest.fixture(scope="session")
def strong_dataset():
    """Moderate-size strong-factor dataset used by several estimation tests."""
    return simulate_dataset(DgpSpec(p1=12, p2=10, T=600, seed=2024))


@pytest.fixture(scope="session")
def noiseless_dataset():
    return simulate_dataset(DgpSpec(p1=12, p2=10, T=600, seed=77, noise_scale=0.0))


def truth_spans(ds):
    from tmfm import orthonormal_basis

    return {
        ("row", 1): orthonormal_basis(ds.truth.R1),
        ("row", 2): orthonormal_basis(ds.truth.R2),
        ("column", 1): orthonormal_basis(ds.truth.C1),
        ("column", 2): orthonormal_basis(ds.truth.C2),
    }
