from __future__ import annotations

import numpy as np
import pytest

from weightanomaly.poisonbench import build_corpus

ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_corpus():
    """8 clean + 4 backdoored networks with the default benchmark settings."""
    records, manifest = build_corpus(8, 4, seed=3)
    return records, manifest


@pytest.fixture
def record_acceptance():
    def _record(key: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_RESULTS[key] = (bool(passed), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0][2:])):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key}: {detail}")
