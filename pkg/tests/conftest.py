import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eiskit.ecm import EcmParams  # noqa: E402

# battery-like circuit used across the suites
THETA = EcmParams(R0=0.02, R1=0.01, C1=20.0, Rct=0.02, Cct=1.0, W=0.005, alpha=0.5)


@pytest.fixture
def theta():
    return THETA


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
