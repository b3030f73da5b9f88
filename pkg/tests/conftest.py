import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rcshape.kernels import build_kernel_table

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    key = lambda c: (int("".join(ch for ch in c if ch.isdigit())), c)
    for crit in sorted(ACCEPTANCE, key=key):
        ok, detail = ACCEPTANCE[crit]
        terminalreporter.write_line(f"criterion {crit:<4} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def kt2():
    return build_kernel_table(2)


@pytest.fixture(scope="session")
def kt3():
    return build_kernel_table(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
