import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tomoed.errors import DimensionMismatch, NotUnitary
from tomoed.fidelity import overlap, worst_case_fidelity
from tomoed.numerics import herm_expm
from tomoed.photonics import U_HAD

from conftest import random_unitary


def hadamard_actual(delta):
    # -i U exp(-i delta pi/2 U); U_HAD is Hermitian with U^2 = I
    return -1j * U_HAD @ herm_expm(U_HAD, delta * np.pi / 2)


def haar_states(rng, n, count):
    z = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sampled_min(u_des, u_act, psis):
    w = u_des.conj().T @ u_act
    return float(np.min(np.abs(np.einsum("si,ij,sj->s", psis.conj(), w, psis)) ** 2))


def hull_distance_sq(lam):
    """Squared distance from 0 to the convex hull of points on the unit circle."""
    ang = np.sort(np.angle(lam))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    big = gaps.max()
    if big <= np.pi:
        return 0.0
    # the hull edge opposite the largest arc is the closest chord
    return float(np.cos(big / 2) ** 2)


def test_global_phase_is_invisible():
    rng = np.random.default_rng(0)
    u = random_unitary(rng, 3)
    assert abs(worst_case_fidelity(u, np.exp(0.7j) * u).value - 1) <= 1e-12


def test_hadamard_small_error():
    assert abs(worst_case_fidelity(U_HAD, hadamard_actual(0.01)).value - 0.999753) <= 5e-7


@pytest.mark.parametrize("delta", np.linspace(-0.2, 0.2, 9))
def test_hadamard_closed_form(delta):
    r = worst_case_fidelity(U_HAD, hadamard_actual(delta))
    assert abs(r.value - np.cos(np.pi * delta / 2) ** 2) <= 1e-8


@pytest.mark.parametrize("n", [2, 3, 4])
def test_random_pairs_against_haar_sampling(n):
    rng = np.random.default_rng(100 + n)
    psis = haar_states(rng, n, 100000)
    for _ in range(10):
        a, b = random_unitary(rng, n), random_unitary(rng, n)
        qp = worst_case_fidelity(a, b).value
        smin = sampled_min(a, b, psis)
        assert qp <= smin + 1e-9
        assert smin - qp <= 1e-3


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_value_matches_hull_geometry(seed, n):
    rng = np.random.default_rng(seed)
    a, b = random_unitary(rng, n), random_unitary(rng, n)
    r = worst_case_fidelity(a, b)
    lam = np.exp(1j * r.eigenphases)
    assert abs(r.value - hull_distance_sq(lam)) <= 1e-8
    assert 0.0 <= r.value <= 1.0
    assert abs(r.z.sum() - 1) <= 1e-12 and r.z.min() >= 0


@given(st.integers(0, 2**32 - 1), st.floats(-np.pi, np.pi))
def test_phase_invariance(seed, phi):
    rng = np.random.default_rng(seed)
    a, b = random_unitary(rng, 3), random_unitary(rng, 3)
    assert abs(worst_case_fidelity(a, b).value - worst_case_fidelity(a, np.exp(1j * phi) * b).value) <= 1e-10


@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_worst_state_attains_value(seed, n):
    rng = np.random.default_rng(seed)
    a, b = random_unitary(rng, n), random_unitary(rng, n)
    r = worst_case_fidelity(a, b)
    assert abs(np.linalg.norm(r.psi) - 1) <= 1e-10
    assert abs(overlap(a, b, r.psi) - r.value) <= 1e-8


def test_value_one_iff_common_phase():
    d = np.diag(np.exp(1j * np.array([0.3, 0.3, 0.3 + 1e-3])))
    assert worst_case_fidelity(np.eye(3), d).value < 1
    assert worst_case_fidelity(np.eye(3), np.exp(0.3j) * np.eye(3)).value == pytest.approx(1, abs=1e-12)


def test_opposite_eigenvalues_give_zero():
    r = worst_case_fidelity(np.eye(2), np.diag([1, -1]))
    assert r.value <= 1e-12
    assert overlap(np.eye(2), np.diag([1, -1]), r.psi) <= 1e-10


def test_errors():
    with pytest.raises(NotUnitary):
        worst_case_fidelity(np.eye(2), np.array([[1, 0], [0, 2]]))
    with pytest.raises(DimensionMismatch):
        worst_case_fidelity(np.eye(2), np.eye(3))
    with pytest.raises(DimensionMismatch):
        worst_case_fidelity(np.ones((2, 3)), np.eye(2))
