import sys

import numpy as np
import pytest

from crfid.siggen import GeneratorConfig, build_dataset


@pytest.fixture(scope="session")
def small_dataset():
    """2,400-row seeded dataset (5 readings per group)."""
    return build_dataset(GeneratorConfig(), readings=5)


@pytest.fixture(scope="session")
def noiseless_dataset():
    return build_dataset(GeneratorConfig().noiseless(), readings=5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in mod.RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
