import logging
import os
import sys

import numpy as np
import pytest

# Add the src directory to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "src")))

from ccb.data import RandomTermSpec, make_sum_spec  # noqa: E402

MODULE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SAMPLES_DIR = os.path.join(MODULE_DIR, "samples")


@pytest.fixture
def caplog(caplog):
    """Fixture to capture log messages."""
    caplog.set_level(logging.DEBUG, logger="ccb")
    return caplog


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_spec():
    """Five heterogeneous two-sided summands."""
    return make_sum_spec(
        [
            RandomTermSpec(mean=0.0, sigma=0.1, b_upper=1.0, a_lower=-1.0),
            RandomTermSpec(mean=0.0, sigma=0.3, b_upper=1.0, a_lower=-1.0),
            RandomTermSpec(mean=1.0, sigma=0.2, b_upper=0.5, a_lower=-0.5),
            RandomTermSpec(mean=0.0, sigma=0.5, b_upper=2.0, a_lower=-2.0),
            RandomTermSpec(mean=-2.0, sigma=0.05, b_upper=0.25, a_lower=-0.25),
        ]
    )


@pytest.fixture
def samples_dir():
    return SAMPLES_DIR
