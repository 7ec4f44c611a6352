import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from tomoed import numerics as nm
from tomoed.errors import NotHermitian, RankDeficient

from conftest import random_hermitian


def test_vec_row_major():
    assert nm.vec([[1, 2], [3, 4]]).tolist() == [1, 2, 3, 4]
    assert nm.vec(np.eye(2)).tolist() == [1, 0, 0, 1]


@given(st.integers(0, 2**32 - 1))
def test_vec_kronecker_identity(seed):
    rng = np.random.default_rng(seed)
    a, x, b = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(3))
    # row-stacking satisfies vec(AXB) = (A kron B^T) vec(X); the column form uses B^T kron A
    lhs = nm.vec(a @ x @ b)
    assert np.allclose(lhs, np.kron(a, b.T) @ nm.vec(x), atol=1e-12)
    col = lambda m: np.asarray(m).T.reshape(-1)
    assert np.allclose(col(a @ x @ b), np.kron(b.T, a) @ col(x), atol=1e-12)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_unvec_round_trip(r, c, seed):
    m = np.random.default_rng(seed).standard_normal((r, c)) + 0j
    assert np.array_equal(nm.unvec(nm.vec(m), r, c), m)


def test_nullspace_trace_row():
    c = nm.nullspace_basis(np.array([[1, 0, 0, 1]], dtype=float))
    assert c.shape == (4, 3)
    assert np.allclose(c.conj().T @ c, np.eye(3), atol=1e-12)
    assert np.allclose(np.array([1, 0, 0, 1]) @ c, 0, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 7])
def test_nullspace_ones_row(n):
    c = nm.nullspace_basis(np.ones((1, n)))
    assert c.shape == (n, n - 1)
    assert np.allclose(np.ones(n) @ c, 0, atol=1e-12)


def test_nullspace_superoperator_constraints():
    # completeness sum_ij X_ij B_i^H B_j = I as n^2 complex equations on vec(X)
    b = nm.pauli_basis(1)
    a = np.zeros((4, 16), dtype=complex)
    for i in range(4):
        for j in range(4):
            a[:, i * 4 + j] = nm.vec(b[i].conj().T @ b[j])
    c = nm.nullspace_basis(a)
    assert c.shape == (16, 12)
    assert np.linalg.norm(a @ c) <= 1e-10
    assert np.allclose(c.conj().T @ c, np.eye(12), atol=1e-12)


def test_nullspace_rank_deficient():
    with pytest.raises(RankDeficient):
        nm.nullspace_basis(np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]]))


def test_expm_z_pi():
    u = nm.herm_expm(np.diag([1.0, -1.0]), math.pi)
    assert np.allclose(u, -np.eye(2), atol=1e-12)


def test_expm_hadamard_quarter_turn():
    u_had = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    assert np.allclose(nm.herm_expm(u_had, math.pi / 2), -1j * u_had, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_expm_matches_power_series(seed, t):
    h = random_hermitian(np.random.default_rng(seed), 4)
    # scaling and squaring of a plain Taylor sum, written out here as an oracle
    a = -1j * t * h
    s = max(0, int(math.ceil(math.log2(max(np.linalg.norm(a, 1), 1e-300)))) + 1)
    a = a / 2**s
    term, total = np.eye(4, dtype=complex), np.eye(4, dtype=complex)
    for k in range(1, 30):
        term = term @ a / k
        total = total + term
    for _ in range(s):
        total = total @ total
    u = nm.herm_expm(h, t)
    assert np.allclose(u, total, atol=1e-9)
    assert np.linalg.norm(u.conj().T @ u - np.eye(4)) <= 1e-10


def test_expm_matches_scipy(rng):
    h = random_hermitian(rng, 6)
    assert np.allclose(nm.herm_expm(h, 0.7), scipy.linalg.expm(-0.7j * h), atol=1e-10)


def test_expm_rejects_non_hermitian():
    with pytest.raises(NotHermitian):
        nm.herm_expm(np.array([[0, 1], [0, 0]]), 1.0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_hermitian_basis_orthonormal(n):
    f = nm.hermitian_basis(n)
    gram = np.einsum("iab,jba->ij", f, f)
    assert np.allclose(gram, np.eye(n * n), atol=1e-12)
    assert all(nm.is_hermitian(m) for m in f)


def test_pauli_basis_orthonormal():
    b = nm.pauli_basis(2)
    gram = np.einsum("iba,jbc->ijac", b.conj(), b).trace(axis1=2, axis2=3)
    assert np.allclose(gram, np.eye(16), atol=1e-12)
