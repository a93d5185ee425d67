import numpy as np
import pytest

from lmmpde.model import LmmConfig, build_transform


@pytest.fixture(scope="session")
def xf21():
    return build_transform(LmmConfig(n=21))


@pytest.fixture(scope="session")
def xf11():
    return build_transform(LmmConfig(n=11))


@pytest.fixture(scope="session")
def xf5():
    return build_transform(LmmConfig(n=5))


@pytest.fixture(scope="session")
def xf2():
    return build_transform(LmmConfig(n=2))


def black_call(f: float, k: float, s: float) -> float:
    """Undiscounted lognormal call expectation with total volatility s."""
    from math import erf, log, sqrt

    if s <= 0:
        return max(f - k, 0.0)

    def phi(x):
        return 0.5 * (1.0 + erf(x / sqrt(2.0)))

    d2 = (log(f / k)) / s - 0.5 * s
    return f * phi(d2 + s) - k * phi(d2)


def black_put(f: float, k: float, s: float) -> float:
    return black_call(f, k, s) - f + k


@pytest.fixture(scope="session")
def flat_curve():
    return np.full(21, 0.1)
