import numpy as np
import pytest

from stochmhd import spectral as sp
from stochmhd.operators import make_context


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ctx8():
    return make_context(sp.make_basis(8, 1.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def ctx_aniso():
    """Unequal Reynolds numbers and S != 1, so weights are exercised."""
    return make_context(sp.make_basis(6, 2.0, 0.5, 1.7))


def direct_field(coeffs, cutoff, x, y):
    """Evaluate sum_k 2 NORM Re(a_k e^{ik.x}) k_perp/|k| pointwise."""
    ms = sp.wave_indices(cutoff)
    phase = np.exp(1j * (np.multiply.outer(x, ms.k1) + np.multiply.outer(y, ms.k2)))
    amp = 2 * sp.NORM * (coeffs * phase).real
    kabs = np.sqrt(ms.ksq)
    return np.stack([amp @ (-ms.k2 / kabs), amp @ (ms.k1 / kabs)])
