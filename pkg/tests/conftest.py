import numpy as np
import pytest

from lesion_data import write_manifest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def manifest(tmp_path):
    return write_manifest(tmp_path / "data")


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for name, ok, detail in test_acceptance.RESULTS:
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
