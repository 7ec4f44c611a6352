"""Worst-case gate fidelity between two unitaries.

With ``U_des^H U_act = V diag(e^{i phi}) V^H`` and ``z_k = |(V^H psi)_k|^2``
the overlap is ``|sum z_k e^{i phi_k}|^2 = z^T (a a^T + b b^T) z`` where
``a = cos phi`` and ``b = sin phi``. Minimizing over the simplex gives the
global worst case; any phases on ``V^H psi`` attain it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _barrier
from .errors import DimensionMismatch, NotUnitary

UNITARY_TOL = 1e-8


@dataclass(frozen=True)
class FidelityResult:
    value: float
    z: np.ndarray
    psi: np.ndarray
    eigenphases: np.ndarray


def _check_unitary(u, name: str) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionMismatch(f"{name} must be a square matrix")
    if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), rtol=0, atol=UNITARY_TOL):
        raise NotUnitary(f"{name} is not unitary within {UNITARY_TOL:g}")
    return u


def _eig_unitary(w: np.ndarray):
    # complex Schur form of a normal matrix is diagonal with a unitary basis
    t, v = scipy.linalg.schur(w, output="complex")
    lam = np.diag(t)
    return lam / np.abs(lam), v


def overlap(u_des, u_act, psi) -> float:
    """``|psi^H U_des^H U_act psi|^2`` for a normalized ``psi``."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return float(abs(psi.conj() @ (np.asarray(u_des).conj().T @ (np.asarray(u_act) @ psi))) ** 2)


def _qp_simplex(q: np.ndarray) -> np.ndarray:
    """Minimize ``z^T Q z`` over the probability simplex with the barrier engine."""
    n = q.shape[0]
    if n == 1:
        return np.ones(1)
    u, _, _ = np.linalg.svd(np.eye(n) - np.full((n, n), 1.0 / n))
    basis = u[:, : n - 1]
    z0 = np.full(n, 1.0 / n)

    def f(y, derivs):
        z = z0 + basis @ y
        v = float(z @ q @ z)
        if not derivs:
            return v, None, None
        return v, basis.T @ (2 * q @ z), 2 * basis.T @ q @ basis

    def phi(y, derivs):
        z = z0 + basis @ y
        if np.any(z <= 0):
            return np.inf, None, None
        v = -float(np.sum(np.log(z)))
        if not derivs:
            return v, None, None
        return v, -basis.T @ (1 / z), (basis.T / z**2) @ basis

    res = _barrier.minimize(f, phi, np.zeros(n - 1), n, tol=1e-12)
    z = np.clip(z0 + basis @ res.z, 0, None)
    return z / z.sum()


def _polish(z: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact minimizer on the support found by the barrier solve.

    The optimum is the point of the convex hull of the eigenvalues ``c``
    closest to the origin, attained on a vertex or an edge.
    """
    best = z
    best_v = abs(z @ c) ** 2
    idx = np.argsort(-z)[: min(3, z.size)]
    for i in idx:
        cand = np.zeros_like(z)
        cand[i] = 1
        v = abs(c[i]) ** 2
        if v < best_v:
            best, best_v = cand, v
        for j in idx:
            if j <= i:
                continue
            d = c[i] - c[j]
            if abs(d) == 0:
                continue
            s = float(np.clip(-np.real(np.conj(d) * c[j]) / abs(d) ** 2, 0, 1))
            v = abs(c[j] + s * d) ** 2
            if v < best_v:
                cand = np.zeros_like(z)
                cand[i], cand[j] = s, 1 - s
                best, best_v = cand, v
    return best


def worst_case_fidelity(u_des, u_act) -> FidelityResult:
    """Minimum over pure inputs of ``|psi^H U_des^H U_act psi|^2``."""
    u_des = _check_unitary(u_des, "u_des")
    u_act = _check_unitary(u_act, "u_act")
    if u_des.shape != u_act.shape:
        raise DimensionMismatch("unitaries differ in dimension")
    lam, v = _eig_unitary(u_des.conj().T @ u_act)
    a, b = lam.real, lam.imag
    q = np.outer(a, a) + np.outer(b, b)
    z = _polish(_qp_simplex(q), lam)
    value = float(np.clip(z @ q @ z, 0.0, 1.0))
    psi = v @ np.sqrt(z)
    return FidelityResult(value, z, psi, np.angle(lam))
