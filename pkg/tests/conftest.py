import math

import numpy as np
import pytest

from steplike import potential as P


@pytest.fixture
def headline():
    """Square well of depth 1 on [-2, -1] and a barrier of height 0.5 on [0, 1]."""
    return P.combine(P.square_well(-1.0, -2.0, -1.0), P.constant(0.5, 0.0, 1.0))


@pytest.fixture
def well():
    """Compact well with one bound state."""
    return P.square_well(-0.5, -2.0, -1.0)


def sech2_soliton(x, kappa=1.0, c=math.sqrt(2.0)):
    """Reflectionless potential with scattering data {R = 0, kappa, c}."""
    x0 = math.log(c / math.sqrt(2 * kappa)) / kappa
    return -2 * kappa**2 / np.cosh(kappa * (x - x0)) ** 2


def well_transmission(k, depth, a, b):
    """Textbook transmission of ``q = -depth`` on [a, b]."""
    w = b - a
    kp = np.sqrt(k * k + depth + 0j)
    return np.exp(-1j * k * w) / (np.cos(kp * w) - 0.5j * (k / kp + kp / k) * np.sin(kp * w))
