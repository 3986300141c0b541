import time

import pytest

from echoml.cli import storage_traces, train_classifier, train_phase
from echoml.config import RunConfig

# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def default_config():
    return RunConfig()


@pytest.fixture(scope="session")
def trained_classifier(default_config):
    start = time.perf_counter()
    clf = train_classifier(default_config)
    clf.fit_seconds_ = time.perf_counter() - start
    return clf


@pytest.fixture(scope="session")
def noiseless_classifier():
    return train_classifier(RunConfig(noise=0.0))


@pytest.fixture(scope="session")
def default_traces(default_config):
    return storage_traces(default_config)


@pytest.fixture(scope="session")
def noiseless_traces():
    return storage_traces(RunConfig(noise=0.0))


@pytest.fixture(scope="session")
def phase_model(default_config):
    reg, mae = train_phase(default_config)
    reg.held_out_mae_ = mae
    return reg
