import pytest

from pilotbox._kernels import BACKENDS
from pilotbox.well import Grid1D, WellSpec


@pytest.fixture
def spec():
    return WellSpec(1.0, 1.0, 1.0)


@pytest.fixture
def grid(spec):
    return Grid1D(1025, spec.length)


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return request.param
