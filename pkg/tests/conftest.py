import numpy as np
import pytest

from tacnog import kernels

KERNEL_FUNCS = ("propagate", "disconjugacy_violation", "colinear_pair", "plant_hold")


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    mod = kernels.available_backends()[request.param]
    for name in KERNEL_FUNCS:
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    monkeypatch.setattr(kernels, "BACKEND", request.param)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

