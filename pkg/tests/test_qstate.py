import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bilocalfnn.exceptions import InputError
from bilocalfnn.qstate import (
    I2,
    I4,
    Povm,
    QuantumState,
    partial_trace,
    projector,
    purification_vector,
    purify,
    random_density,
    singlet,
    tensor,
    validate_povm,
    werner,
)
from bilocalfnn.simulation import AngleSet, CentralConfig, feedback_povm_coarse, feedback_povm_fine

finite_angles = st.floats(-20.0, 20.0, allow_nan=False)
probabilities = st.floats(0.0, 1.0)


def test_projector_examples():
    assert np.allclose(projector(0.0), [[1, 0], [0, 0]])
    assert np.allclose(projector(math.pi / 2), [[0, 0], [0, 1]], atol=1e-15)
    assert np.allclose(projector(math.pi / 4), np.full((2, 2), 0.5))


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_projector_rejects_non_finite(bad):
    with pytest.raises(InputError):
        projector(bad)


@given(finite_angles)
def test_projector_idempotent_unit_trace(theta):
    p = projector(theta)
    assert np.max(np.abs(p @ p - p)) < 1e-12
    assert abs(np.trace(p) - 1) < 1e-12


def test_singlet_entries():
    rho = singlet().matrix
    assert np.allclose(np.diag(rho).real, [0, 0.5, 0.5, 0])
    assert abs(rho[1, 2] + 0.5) < 1e-15
    assert abs(singlet().purity() - 1) < 1e-12


@given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_singlet_invariant_under_collective_unitary(a, b, c):
    u = np.array([[math.cos(a), -np.exp(1j * c) * math.sin(a)],
                  [np.exp(1j * b) * math.sin(a), np.exp(1j * (b + c)) * math.cos(a)]])
    uu = np.kron(u, u)
    rho = singlet().matrix
    assert np.allclose(uu @ rho @ uu.conj().T, rho, atol=1e-12)


def test_werner_limits():
    assert werner(0.0).is_close(singlet())
    assert np.allclose(werner(1.0).matrix, I4 / 4)
    assert np.allclose(np.sort(werner(0.5).eigenvalues()), [0.125, 0.125, 0.125, 0.625])


@pytest.mark.parametrize("bad", [-0.01, 1.01, math.nan])
def test_werner_rejects_out_of_range(bad):
    with pytest.raises(InputError):
        werner(bad)


def test_werner_spectrum_random(rng):
    for nu in rng.uniform(0, 1, 100):
        expected = sorted([1 - 3 * nu / 4] + [nu / 4] * 3)
        assert np.allclose(np.sort(werner(nu).eigenvalues()), expected, atol=1e-10)


def test_tensor_examples(rng):
    assert np.allclose(tensor(I2, I2), I4)
    assert np.allclose(tensor(projector(0), projector(math.pi / 2)), np.diag([0, 1, 0, 0]), atol=1e-15)
    for _ in range(10):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        assert abs(np.trace(tensor(a, b)) - np.trace(a) * np.trace(b)) < 1e-12


def test_tensor_left_factor_most_significant():
    a = np.diag([1.0, 2.0])
    b = np.diag([1.0, 10.0])
    assert np.allclose(np.diag(tensor(a, b)), [1, 10, 2, 20])


def test_partial_trace_of_product(rng):
    r1, r2 = random_density(2, rng).matrix, random_density(4, rng).matrix
    joint = np.kron(r1, r2)
    assert np.allclose(partial_trace(joint, (2, 4), keep=(0,)), r1)
    assert np.allclose(partial_trace(joint, (2, 4), keep=(1,)), r2)


def test_validate_povm_examples():
    assert validate_povm(Povm((projector(0), projector(math.pi / 2)))).ok
    rep = validate_povm(Povm((I2, I2 * 0)))
    assert rep.ok
    lone = validate_povm(Povm((I2 * 2,)))
    assert not lone.ok and abs(lone.completeness - 1) < 1e-12


def test_validate_povm_single_identity_is_complete():
    # a one-element identity POVM is complete; removing mass breaks it
    assert validate_povm(Povm((I2,))).ok
    assert abs(validate_povm(Povm((0.0 * I2,))).completeness - 1) < 1e-12


def test_validate_povm_detects_negativity():
    bad = Povm((np.diag([1.5, 0.5]), np.diag([-0.5, 0.5])))
    rep = validate_povm(bad)
    assert rep.completeness < 1e-12 and rep.min_eigenvalue < -0.4 and not rep.ok


def test_validate_povm_on_constructor_outputs(rng):
    for _ in range(100):
        ang = AngleSet.from_array(rng.uniform(-np.pi, np.pi, 10))
        p, a0, a1 = rng.uniform(size=3)
        assert validate_povm(feedback_povm_fine(ang, p), 1e-12).ok
        assert validate_povm(feedback_povm_coarse(ang, CentralConfig("feedback", p, a0, a1)), 1e-12).ok


def test_quantum_state_validation():
    with pytest.raises(InputError):
        QuantumState(np.diag([0.6, 0.6]))
    with pytest.raises(InputError):
        QuantumState(np.diag([1.2, -0.2]))
    with pytest.raises(InputError):
        QuantumState(np.array([[0.5, 0.5], [0.0, 0.5]]))


def test_purify_examples():
    pure = werner(0.0)
    vec = purification_vector(pure)
    # pure input: product with the first ancilla basis vector
    assert np.allclose(vec.reshape(4, 4)[:, 1:], 0)
    mixed = purify(werner(1.0)).matrix
    reduced_anc = partial_trace(mixed, (4, 4), keep=(1,))
    assert np.allclose(reduced_anc, I4 / 4)
    assert np.allclose(partial_trace(purify(werner(0.3)).matrix, (4, 4), keep=(0,)),
                       werner(0.3).matrix, atol=1e-9)


def test_purify_round_trip_random(rng):
    for _ in range(50):
        rho = random_density(4, rng, rank=int(rng.integers(1, 5)))
        back = partial_trace(purify(rho).matrix, (4, 4), keep=(0,))
        assert np.max(np.abs(back - rho.matrix)) < 1e-9


def test_purify_rejects_non_psd():
    with pytest.raises(InputError):
        purification_vector(np.diag([1.5, -0.5]))
