from __future__ import annotations

import logging

import numpy as np
import pytest

from hybridsgd.csr import CsrMatrix
from hybridsgd.dataio import Dataset, FetchError, fetch_dataset, gen_synthetic


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("cache")


@pytest.fixture(scope="session")
def breast_cancer(cache_dir) -> Dataset:
    logging.getLogger("hybridsgd.dataio.fetch").setLevel(logging.ERROR)
    return fetch_dataset("breast-cancer", cache_dir, retries=0)


@pytest.fixture(scope="session")
def w1a(cache_dir):
    """The w1a dataset, or the reason it could not be obtained."""
    try:
        return fetch_dataset("w1a", cache_dir, retries=0)
    except FetchError as exc:
        return exc


@pytest.fixture
def tiny() -> Dataset:
    # A = I_2, y = [+1, -1]
    return Dataset(CsrMatrix.from_dense([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, -1.0]),
                   name="tiny")


@pytest.fixture(scope="session")
def synthetic300() -> Dataset:
    return gen_synthetic(256, 300, 10, seed=1)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(capsys):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def report(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} -- {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
