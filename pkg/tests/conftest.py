import numpy as np
import pytest
from hypothesis import settings

from phenokpp.grid import Axis, build_grid

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def small_grid():
    return build_grid([Axis(1.0, 8)], [Axis(2.0, 9, "neumann", -1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
