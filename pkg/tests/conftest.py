import numpy as np
import pytest

from dssnal import build_gossip, make_instance
from dssnal.data import gen_random_classification, gen_random_regression


def small_instance(family="huber", n=5, S=40, m=4, gamma=0.1, seed=0, **kw):
    gen = gen_random_regression if family == "huber" else gen_random_classification
    ds = gen(n, S, seed=seed)
    return make_instance(family, ds.features, ds.labels, m, gamma=gamma, **kw)


@pytest.fixture
def huber4():
    return small_instance("huber")


@pytest.fixture
def svc4():
    return small_instance("svc")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def complete4():
    return build_gossip("complete", 4)


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    """Store one pass/fail line for the acceptance summary and echo it."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
