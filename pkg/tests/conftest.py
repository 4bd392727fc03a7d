import numpy as np
import pytest


@pytest.fixture(autouse=True)
def _no_nan_warnings():
    # Tests that provoke breakdowns do so deliberately; keep the output
    # readable by treating overflow warnings as errors nowhere and NaN
    # comparisons as plain results.
    with np.errstate(over="ignore", invalid="ignore"):
        yield
