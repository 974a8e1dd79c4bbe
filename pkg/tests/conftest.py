from __future__ import annotations

import sys

import pytest

from helpers import START_MS, ingest_fixture_corpus, make_service
from soctutor.ids import ManualClock


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.module.__name__ == "test_acceptance":
        status = "PASS" if report.passed else "FAIL"
        sys.stderr.write(f"[ACCEPTANCE] {item.name}: {status}\n")


@pytest.fixture
def clock():
    return ManualClock(START_MS)


@pytest.fixture
def service(tmp_path, clock):
    svc = make_service(tmp_path, clock=clock)
    yield svc
    svc.close()


@pytest.fixture
def indexed_service(service):
    ingest_fixture_corpus(service)
    return service
