import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from flatbundles import DegreeFunctional, MetricField, circle, torus

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

E = np.e


@pytest.fixture(scope="session")
def t2():
    return torus(2, 64)


@pytest.fixture(scope="session")
def t2_coarse():
    return torus(2, 32)


@pytest.fixture(scope="session")
def s1():
    return circle(64)


@pytest.fixture(scope="session")
def g_t2(t2):
    return MetricField.constant_metric(t2, np.eye(2))


@pytest.fixture(scope="session")
def g_s1(s1):
    return MetricField.constant_metric(s1, np.eye(1))


@pytest.fixture(scope="session")
def d_t2(t2, g_t2):
    return DegreeFunctional.numeric(t2, g_t2)


@pytest.fixture(scope="session")
def d_s1(s1, g_s1):
    return DegreeFunctional.numeric(s1, g_s1)


def rot(a):
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
