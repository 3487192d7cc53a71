import numpy as np
import pytest

from tiltmpc.params import PhysicalParams


@pytest.fixture
def params():
    return PhysicalParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit_quat(rng, n=None):
    shape = (4,) if n is None else (n, 4)
    q = rng.normal(size=shape)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def random_state_vec(rng, params, n=None):
    """Random but physically moderate raw state vectors."""
    shape = () if n is None else (n,)
    x = np.zeros(shape + (17,))
    x[..., 0:3] = rng.normal(scale=1.0, size=shape + (3,))
    x[..., 2] += 2.0
    x[..., 3:6] = rng.normal(scale=0.5, size=shape + (3,))
    x[..., 6:10] = random_unit_quat(rng, n)
    x[..., 10:13] = rng.normal(scale=0.5, size=shape + (3,))
    x[..., 13:17] = rng.uniform(-0.6, 0.6, size=shape + (4,))
    return x


def random_input_vec(rng, params, n=None):
    shape = () if n is None else (n,)
    u = np.zeros(shape + (8,))
    u[..., 0:4] = rng.uniform(params.f_min + 0.5, params.f_max - 0.5, size=shape + (4,))
    u[..., 4:8] = rng.uniform(-0.8, 0.8, size=shape + (4,))
    return u
