import pytest
import torch

from vdamp.phantom_io import shepp_logan
from vdamp.sampling import draw_mask, make_density, make_rng, measure, snr_to_sigma
from vdamp.solvers import ReconProblem


@pytest.fixture
def rng():
    return make_rng(1234)


def random_complex(rng, shape):
    return torch.from_numpy(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@pytest.fixture
def complex_image(rng):
    def make(h, w=None):
        return random_complex(rng, (h, h if w is None else w))
    return make


@pytest.fixture(scope='session')
def phantom64():
    return shepp_logan(64)


@pytest.fixture(scope='session')
def problem64(phantom64):
    """Shepp-Logan 64x64, N/n = 4, 40 dB."""
    density = make_density((64, 64), 1 / 4)
    sampling = draw_mask(density, seed=0)
    sigma = snr_to_sigma(phantom64, 40)
    y = measure(phantom64, sampling, sigma, seed=1)
    return ReconProblem(y=y, sampling=sampling, density=density, x0=phantom64,
                        sigma=sigma, scales=3)

