import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from slicessl.tensorcore import reset_tape, set_strict


@pytest.fixture(autouse=True)
def _clean_tape():
    set_strict(True)
    reset_tape()
    yield
    reset_tape()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
