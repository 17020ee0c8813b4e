import itertools
import json
import math

import numpy as np
import pytest

from bilocalfnn.exceptions import InputError
from bilocalfnn.qstate import I4, Povm, random_density, werner
from bilocalfnn.simulation import (
    OPTIMAL_SEPARABLE,
    AngleSet,
    Behavior,
    CentralConfig,
    Strategy,
    behavior,
    coarse_grain,
    explicit_central_table,
    feedback_povm_coarse,
    feedback_povm_fine,
    pi_fraction,
    werner_feedback_table,
)
from bilocalfnn.witness import correlators

from conftest import random_angles


def test_fine_povm_all_zero_angles():
    fine = feedback_povm_fine(AngleSet.from_array(np.zeros(10)), 0.5)
    assert np.allclose(fine[(0, 0)], np.diag([1, 0, 0, 0]))
    for e in fine.elements:
        assert np.allclose(e, np.diag(np.diag(e)))


def test_fine_povm_completeness_random(rng):
    for _ in range(200):
        fine = feedback_povm_fine(random_angles(rng), rng.uniform())
        assert np.max(np.abs(sum(fine.elements) - I4)) < 1e-12


def test_fine_povm_one_way_limit(rng):
    from bilocalfnn.qstate import outcome_projector, tensor

    ang = random_angles(rng)
    fine = feedback_povm_fine(ang, 1.0)
    cond = (ang.b1_given_b0_0, ang.b1_given_b0_1)
    for b0, b1 in itertools.product((0, 1), repeat=2):
        expected = tensor(outcome_projector(ang.b0_free, b0), outcome_projector(cond[b0], b1))
        assert np.allclose(fine[(b0, b1)], expected)


def test_fine_povm_rejects_bad_p():
    with pytest.raises(InputError):
        feedback_povm_fine(OPTIMAL_SEPARABLE, 1.5)


def test_coarse_matches_fine_without_noise(rng):
    for _ in range(50):
        ang, p = random_angles(rng), rng.uniform()
        coarse = feedback_povm_coarse(ang, CentralConfig("feedback", p, 1.0, 1.0))
        direct = coarse_grain(feedback_povm_fine(ang, p))
        for b in (0, 1):
            assert np.max(np.abs(coarse[b] - direct[b])) < 1e-12


def test_coarse_zero_signal_is_fair_coin(rng):
    coarse = feedback_povm_coarse(random_angles(rng), CentralConfig("feedback", 0.3, 0.0, 0.0))
    for b in (0, 1):
        assert np.allclose(coarse[b], I4 / 2)


def test_central_config_validation():
    with pytest.raises(InputError):
        CentralConfig("feedback", 0.5, 1.2, 1.0)
    with pytest.raises(InputError):
        CentralConfig("other")
    with pytest.raises(InputError):
        CentralConfig("explicit")


def test_behavior_invariants_random_strategies(rng):
    for k in range(200):
        rho1 = random_density(4, rng) if k % 2 else werner(rng.uniform())
        rho2 = random_density(4, rng) if k % 3 else werner(rng.uniform())
        p, a0, a1 = rng.uniform(size=3)
        s = Strategy(rho1, rho2, random_angles(rng), CentralConfig("feedback", p, a0, a1))
        beh = behavior(s)
        beh.check(1e-9)
        assert beh.table.min() >= 0.0


def test_maximally_mixed_sources_factorize(rng):
    beh = behavior(Strategy.werner_feedback(random_angles(rng), 1.0))
    t = beh.table
    pb = t.sum(axis=(2, 4))  # [x, z, b]
    for x, z, a, b, c in itertools.product((0, 1), repeat=5):
        assert abs(t[x, z, a, b, c] - 0.25 * pb[x, z, b]) < 1e-12
    assert np.allclose(correlators(beh).tri, 0, atol=1e-12)


def test_fair_coin_central_measurement(rng):
    povm = Povm((I4 / 2, I4 / 2), (0, 1))
    s = Strategy(werner(0.2), werner(0.7), random_angles(rng), CentralConfig.explicit(povm))
    pb = behavior(s).table.sum(axis=(2, 4))
    assert np.allclose(pb, 0.5)


def test_closed_form_matches_trace_evaluation(rng):
    for _ in range(30):
        ang = rng.uniform(0, np.pi, 10)
        nu1, nu2, p, a0, a1 = rng.uniform(size=5)
        s = Strategy(werner(nu1), werner(nu2), AngleSet.from_array(ang),
                     CentralConfig("feedback", p, a0, a1))
        fast = werner_feedback_table(ang, 1 - nu1, 1 - nu2, p, a0, a1)
        assert np.max(np.abs(fast - behavior(s).table)) < 1e-12


def test_explicit_table_matches_trace_evaluation(rng):
    for _ in range(20):
        g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = g + g.conj().T
        w, v = np.linalg.eigh(h)
        pi0 = (v * rng.uniform(size=4)) @ v.conj().T
        r1, r2 = random_density(4, rng), random_density(4, rng)
        ang = random_angles(rng)
        s = Strategy(r1, r2, ang, CentralConfig.explicit(Povm((pi0, I4 - pi0), (0, 1))))
        outer = np.array([ang.a1, ang.a2, ang.c1, ang.c2])
        table = explicit_central_table(outer, r1.matrix, r2.matrix, pi0)
        assert np.max(np.abs(table - behavior(s).table)) < 1e-12


def test_noise_moves_behavior_towards_uniform(rng):
    for _ in range(5):
        ang = rng.uniform(0, np.pi, 10)
        dist = [np.abs(werner_feedback_table(ang, 1 - nu, 1 - nu) - 0.125).max()
                for nu in np.linspace(0, 1, 20)]
        assert all(b <= a + 1e-12 for a, b in zip(dist, dist[1:]))


def test_behavior_json_round_trip(optimal_strategy):
    beh = behavior(optimal_strategy)
    back = Behavior.from_json(beh.to_json())
    assert np.array_equal(back.table, beh.table)
    data = json.loads(beh.to_json())
    assert data["outcomes"] == [2, 2, 2] and data["settings"] == [2, 2]


def test_behavior_json_errors():
    with pytest.raises(InputError, match="line 2"):
        Behavior.from_json('{\n  "outcomes": [2,2,2],,\n}')
    with pytest.raises(InputError):
        Behavior.from_dict({"outcomes": [2, 2], "settings": [2, 2], "table": []})
    with pytest.raises(InputError):
        Behavior(np.zeros((2, 2, 2)))


def test_behavior_check_detects_defects():
    t = np.full((2, 2, 2, 2, 2), 1 / 8)
    t[0, 0, 0, 0, 0] += 0.1
    with pytest.raises(InputError, match="normalized"):
        Behavior(t).check()
    t = np.full((2, 2, 2, 2, 2), 1 / 8)
    t[0, 0, 0, 0, 0] += 0.05
    t[0, 0, 0, 0, 1] -= 0.05  # keeps the slice normalized, signals z -> (a, b)
    with pytest.raises(InputError, match="signaling"):
        Behavior(t).check()


def test_mirrored_swaps_roles(optimal_strategy):
    beh = behavior(optimal_strategy)
    m = beh.mirrored()
    assert np.allclose(m.alice_marginal(), beh.carol_marginal())
    assert np.array_equal(m.mirrored().table, beh.table)


@pytest.mark.parametrize("text,value", [
    ("41/103", 41 / 103 * math.pi),
    ("-78/183", -78 / 183 * math.pi),
    ("1/4", math.pi / 4),
    ("0.5rad", 0.5),
    (0.25, 0.25),
])
def test_pi_fraction(text, value):
    assert abs(pi_fraction(text) - value) < 1e-15


@pytest.mark.parametrize("bad", ["abc", "1/0", None, "rad"])
def test_pi_fraction_rejects(bad):
    with pytest.raises(InputError):
        pi_fraction(bad)


def test_angle_set_validation():
    with pytest.raises(InputError):
        AngleSet.from_array(np.zeros(9))
    with pytest.raises(InputError):
        AngleSet.from_array([math.nan] + [0.0] * 9)
