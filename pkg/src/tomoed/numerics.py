"""Dense complex linear algebra kernels for small matrices (n <= 16).

``vec`` stacks rows. With that convention ``vec(A X B) = kron(A, B.T) vec(X)``
and ``Tr(A X) = vec(A.T) . vec(X)``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NotHermitian, RankDeficient

RANK_TOL = 1e-12
HERM_TOL = 1e-12

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def as_cmat(m) -> np.ndarray:
    """Return ``m`` as a finite 2-D complex array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DimensionMismatch("matrix has non-finite entries")
    return a


def dag(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def vec(m) -> np.ndarray:
    """Row-stacked vector of a matrix."""
    return np.asarray(m).reshape(-1).copy()


def unvec(v, rows: int, cols: int | None = None) -> np.ndarray:
    cols = rows if cols is None else cols
    v = np.asarray(v)
    if v.size != rows * cols:
        raise DimensionMismatch(f"cannot reshape {v.size} entries to {rows}x{cols}")
    return v.reshape(rows, cols).copy()


def kron(*ms) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


def is_hermitian(m, tol: float = HERM_TOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(m, dag(m), rtol=0, atol=tol)


def hermitize(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    return 0.5 * (m + dag(m))


def herm_eigh(h, tol: float = HERM_TOL):
    """Eigendecomposition of a Hermitian matrix (ascending eigenvalues)."""
    h = as_cmat(h)
    if not is_hermitian(h, tol * max(1.0, float(np.max(np.abs(h))))):
        raise NotHermitian("matrix is not Hermitian")
    return np.linalg.eigh(hermitize(h))


def svd(a):
    return np.linalg.svd(np.asarray(a), full_matrices=True)


def nullspace_basis(a, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis for the nullspace of a full-row-rank matrix.

    Real input gives a real basis. Raises ``RankDeficient`` when the
    smallest singular value is below ``tol`` relative to the largest.
    """
    a = np.atleast_2d(np.asarray(a))
    rows, cols = a.shape
    if rows >= cols:
        raise DimensionMismatch("nullspace_basis needs more columns than rows")
    _, s, wh = svd(a)
    if s[0] == 0 or s[-1] / s[0] < tol:
        raise RankDeficient(f"numerical rank below {rows} (sigma_min/sigma_max = {s[-1] / max(s[0], 1e-300):.3e})")
    c = dag(wh)[:, rows:]
    if np.isrealobj(a):
        c = c.real
    return c


def herm_expm(h, t: float = 1.0, sign: int = -1) -> np.ndarray:
    """``exp(sign * 1j * t * h)`` for Hermitian ``h`` via eigendecomposition."""
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    w, v = herm_eigh(h)
    return (v * np.exp(sign * 1j * t * w)) @ dag(v)


def expm_taylor(a, terms: int = 60) -> np.ndarray:
    """Scaled power-series matrix exponential (reference implementation)."""
    a = as_cmat(a)
    norm = np.linalg.norm(a, 1)
    s = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0.5 else 0
    b = a / 2**s
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ b / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


@lru_cache(maxsize=None)
def _hermitian_basis(n: int) -> np.ndarray:
    els = [np.eye(n, dtype=complex) / np.sqrt(n)]
    for k in range(1, n):
        d = np.zeros((n, n), dtype=complex)
        d[np.arange(k), np.arange(k)] = 1.0
        d[k, k] = -k
        els.append(d / np.sqrt(k * (k + 1)))
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = e[j, i] = 1 / np.sqrt(2)
            els.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = -1j / np.sqrt(2)
            e[j, i] = 1j / np.sqrt(2)
            els.append(e)
    out = np.array(els)
    out.setflags(write=False)
    return out


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis of n x n Hermitian matrices under Tr(A^H B).

    Element 0 is ``I/sqrt(n)``; all others are traceless. Shape (n*n, n, n).
    """
    return _hermitian_basis(int(n))


def herm_coords(m, basis: np.ndarray) -> np.ndarray:
    """Real coordinates of a Hermitian matrix in an orthonormal Hermitian basis."""
    return np.einsum("kij,ji->k", basis, np.asarray(m)).real


def herm_from_coords(x, basis: np.ndarray) -> np.ndarray:
    return np.tensordot(np.asarray(x, dtype=float), basis, axes=1)


@lru_cache(maxsize=None)
def _pauli_basis(q: int) -> np.ndarray:
    single = [PAULI_I, PAULI_X, PAULI_Y, PAULI_Z]
    els = [np.eye(1, dtype=complex)]
    for _ in range(q):
        els = [np.kron(a, p) for a in els for p in single]
    out = np.array(els) / np.sqrt(2.0**q)
    out.setflags(write=False)
    return out


def pauli_basis(q: int = 1) -> np.ndarray:
    """Normalized Pauli operator basis for q qubits, shape (4**q, 2**q, 2**q)."""
    return _pauli_basis(int(q))


def default_operator_basis(n: int) -> np.ndarray:
    """Pauli basis when n is a power of two, else the Hermitian basis."""
    q = int(round(np.log2(n)))
    if 2**q == n:
        return pauli_basis(q)
    return hermitian_basis(n)


def psd_sqrt(m) -> np.ndarray:
    w, v = herm_eigh(m, tol=1e-9)
    return (v * np.sqrt(np.clip(w, 0, None))) @ dag(v)


def stack_vecs(mats: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([vec(m) for m in mats])
