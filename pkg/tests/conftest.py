import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles module

from tempcal import autodiff as ad


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def finite_checks():
    """Debug builds assert finiteness after every forward op."""
    previous = ad.set_debug_checks(True)
    yield
    ad.set_debug_checks(previous)
