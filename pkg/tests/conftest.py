import numpy as np
import pytest

from xpsram.bitcell import Bitcell, BitcellConfig


@pytest.fixture(scope="session")
def cfg() -> BitcellConfig:
    return BitcellConfig()


@pytest.fixture
def cell(cfg) -> Bitcell:
    return Bitcell(cfg)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
