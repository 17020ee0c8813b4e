import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bilocalfnn.exceptions import InputError
from bilocalfnn.qstate import random_density, werner
from bilocalfnn.simulation import AngleSet, Behavior, CentralConfig, Strategy, behavior
from bilocalfnn.witness import (
    check_oneway_factorization,
    correlators,
    fnn_table,
    fnn_values,
)

from conftest import random_angles, random_feedback_behavior


def _outcome_sum_oracle(table):
    """Correlators from explicit sums over outcome strings."""
    sign = lambda o: 1 - 2 * o  # noqa: E731

    def tri(x, z):
        return sum(sign(a) * sign(b) * sign(c) * table[x, z, a, b, c]
                   for a, b, c in itertools.product((0, 1), repeat=3))

    def ab(x):
        return sum(sign(a) * sign(b) * table[x, 0, a, b, c]
                   for a, b, c in itertools.product((0, 1), repeat=3))

    def bc(z):
        return sum(sign(b) * sign(c) * table[0, z, a, b, c]
                   for a, b, c in itertools.product((0, 1), repeat=3))

    def a1(x):
        return sum(sign(a) * table[x, 0, a, b, c] for a, b, c in itertools.product((0, 1), repeat=3))

    def c1(z):
        return sum(sign(c) * table[0, z, a, b, c] for a, b, c in itertools.product((0, 1), repeat=3))

    f1 = -tri(0, 1) - ab(1) + c1(1) * (ab(0) + tri(1, 1) + c1(1))
    f2 = -tri(0, 1) + bc(0) + a1(0) * (bc(1) - tri(0, 0) + a1(0))
    return f1, f2


def test_witness_matches_outcome_sum_oracle(rng):
    for _ in range(50):
        beh = random_feedback_behavior(rng)
        w = fnn_values(beh)
        f1, f2 = _outcome_sum_oracle(beh.table)
        assert abs(w.fnn1 - f1) < 1e-12 and abs(w.fnn2 - f2) < 1e-12
        assert np.allclose(fnn_table(beh.table), (w.fnn1, w.fnn2), atol=1e-12)


def test_uniform_behavior_gives_zero():
    w = fnn_values(Behavior(np.full((2, 2, 2, 2, 2), 1 / 8)))
    assert w.fnn1 == pytest.approx(0.0, abs=1e-15)
    assert w.fnn2 == pytest.approx(0.0, abs=1e-15)
    assert not any(w.violated)


@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_witness_algebraic_bound(seed):
    rng = np.random.default_rng(seed)
    beh = random_feedback_behavior(rng)
    w = fnn_values(beh)
    assert abs(w.fnn1) <= 5 + 1e-12 and abs(w.fnn2) <= 5 + 1e-12
    cs = correlators(beh)
    for arr in (cs.tri, cs.ab, cs.bc, cs.a, cs.c):
        assert np.all(np.abs(arr) <= 1 + 1e-12)


def test_witness_result_fields(optimal_strategy):
    w = fnn_values(behavior(optimal_strategy))
    d = w.to_dict()
    assert d["margin1"] == pytest.approx(w.fnn1 - 1)
    assert w.objective == min(w.fnn1, w.fnn2)
    assert w.simultaneous == (w.fnn1 > 1 and w.fnn2 > 1)


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_oneway_factorization(rng, p):
    for k in range(20):
        rho1 = werner(rng.uniform()) if k % 2 else random_density(4, rng)
        rho2 = werner(rng.uniform()) if k % 3 else random_density(4, rng)
        s = Strategy(rho1, rho2, random_angles(rng), CentralConfig("feedback", p))
        report = check_oneway_factorization(s)
        assert report.holds(1e-9), report.max_deviation


def test_factorization_rejects_two_way_strategy(optimal_strategy):
    with pytest.raises(InputError):
        check_oneway_factorization(optimal_strategy)
    s = Strategy.werner_feedback(AngleSet.from_array(np.zeros(10)), 0.0, p=1.0, alpha0=0.5)
    with pytest.raises(InputError):
        check_oneway_factorization(s)
