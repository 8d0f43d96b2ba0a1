import numpy as np
import pytest

from smp_spde.models import builtin_problem

import dataclasses


def small(name, **kw):
    """Desk-size variant of a built-in problem for fast tests."""
    kwargs = {"n_modes": 4, "n_steps": 20, "horizon": 0.1}
    if name == "clipped-lq":
        kwargs = {"n_modes": 4, "n_steps": 20}
    kwargs.update(kw)
    return builtin_problem(name, **kwargs)


@pytest.fixture
def linear_small():
    return small("linear")


@pytest.fixture
def cubic_small():
    return small("cubic")


@pytest.fixture
def burgers_small():
    return small("burgers")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def with_u0(spec, u0):
    return dataclasses.replace(spec, u0=np.asarray(u0, dtype=np.float64))
