import numpy as np
import pytest

from polsense.polmodel import ChannelParams


def random_channel(rng, N, gamma_range=(0.07, 0.17), min_abs_sin=0.0, tau=1.0):
    """Channel with uniform angles, resampled until every |sin phi_n| exceeds ``min_abs_sin``."""
    while True:
        phi = rng.uniform(-np.pi, np.pi, N)
        if np.min(np.abs(np.sin(phi))) > min_abs_sin:
            break
    return ChannelParams(rng.uniform(*gamma_range, N), phi, rng.uniform(-np.pi, np.pi, N), tau)


def fingerprint_error(est, truth):
    """Max error of (|cos phi_n|, gamma_n), the sign-invariant comparison."""
    return max(np.max(np.abs(est.abs_cos_phi() - truth.abs_cos_phi())),
               np.max(np.abs(est.gamma - truth.gamma)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
