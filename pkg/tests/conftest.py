import hypothesis
import numpy as np
import pytest

from tvflow import SO3, Sphere

hypothesis.settings.register_profile(
    "default", deadline=None, max_examples=100)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def sphere():
    return Sphere()


@pytest.fixture(scope="session")
def so3():
    return SO3()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
