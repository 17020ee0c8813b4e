import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bilocalfnn.qstate import werner
from bilocalfnn.simulation import OPTIMAL_SEPARABLE, AngleSet, Behavior, Strategy, werner_feedback_table

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# criterion number -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_angles(rng) -> AngleSet:
    return AngleSet.from_array(rng.uniform(0.0, np.pi, 10))


def random_feedback_behavior(rng) -> Behavior:
    ang = rng.uniform(0.0, np.pi, 10)
    p, a0, a1 = rng.uniform(size=3)
    nu = rng.uniform(0.0, 0.6)
    return Behavior(werner_feedback_table(ang, 1 - nu, 1 - nu, p, a0, a1))


@pytest.fixture
def optimal_strategy():
    return Strategy.werner_feedback(OPTIMAL_SEPARABLE, 0.0)


@pytest.fixture
def singlet_state():
    return werner(0.0)
