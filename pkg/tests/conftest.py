import sys

import numpy as np
import pytest

from bgfd.data import Dataset, SynthConfig, generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_dataset():
    return Dataset.from_pairs(generate_dataset(SynthConfig(count=4, image_size=64, seed=11)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if not mod or not mod.OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.OUTCOMES):
        terminalreporter.write_line(mod.format_line(n, mod.OUTCOMES[n]))
