from pathlib import Path

import numpy as np
import pytest

from shapelr import _pykernels

DATA = Path(__file__).parent / "data"

try:
    from shapelr import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if _ckernels is not None:
    BACKENDS.append(pytest.param(_ckernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return request.param


@pytest.fixture
def twelve_path():
    return DATA / "twelve.csv"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
