"""Fisher information blocks, Cramer-Rao bounds and identifiability checks.

For a linear problem with coordinates ``x = x_true + C_eq z``, each
configuration contributes ``G_gamma = C_eq^T (sum_alpha a a^T / p) C_eq``.
For Hamiltonian problems the derivatives come from central finite
differences and ``G_gamma = sum_alpha (grad p grad p^T / p - hess p)``.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from . import numerics as nm
from .errors import NotIdentifiable, NotNormalized, ZeroProbability
from .qmodel import EstimationProblem, HamiltonianProblem, LinearProblem

P_FLOOR = 1e-12
COND_LIMIT = 1e12

ZeroPolicy = Literal["drop-terms", "drop-config", "raise"]


class ZeroProbabilityWarning(UserWarning):
    """Outcomes with vanishing probability were left out of a Fisher block."""


@dataclass(frozen=True, eq=False)
class FisherModel:
    blocks: np.ndarray
    c_eq: Optional[np.ndarray]
    tag: str
    surrogate: object
    labels: tuple
    dropped: tuple = ()
    # per-configuration trace of the unprojected information, an absolute
    # scale for rank decisions when C_eq removes everything a block carries
    ref: Optional[np.ndarray] = None

    @property
    def n_configs(self) -> int:
        return self.blocks.shape[0]

    @property
    def dim(self) -> int:
        return self.blocks.shape[1]

    def aggregate(self, allocation) -> np.ndarray:
        w = np.asarray(allocation, dtype=float)
        if w.shape != (self.n_configs,):
            raise ValueError(f"allocation needs {self.n_configs} entries")
        return np.tensordot(w, self.blocks, axes=1)

    def scaled(self, c: float) -> "FisherModel":
        ref = None if self.ref is None else self.ref * c
        return FisherModel(self.blocks * c, self.c_eq, self.tag, self.surrogate, self.labels, self.dropped, ref)

    def subset(self, idx) -> "FisherModel":
        idx = list(idx)
        ref = None if self.ref is None else self.ref[idx]
        return FisherModel(self.blocks[idx], self.c_eq, self.tag, self.surrogate, tuple(self.labels[i] for i in idx), (), ref)

    def scale(self, allocation) -> float:
        """Reference magnitude of the aggregate information for rank tests."""
        w = np.asarray(allocation, dtype=float)
        if self.ref is None:
            return float(np.trace(self.aggregate(w)))
        return float(w @ self.ref)


@dataclass(frozen=True)
class BoundReport:
    V: float
    G: np.ndarray
    condition: float
    identifiable: bool


@dataclass(frozen=True)
class IdentifiabilityReport:
    rank: int
    condition: float
    eigenvalues: np.ndarray
    null_directions: np.ndarray
    identifiable: bool


_CEQ_CACHE: dict = {}


def _ceq_key(problem: LinearProblem):
    a, b = problem.eq_system
    digest = hashlib.sha1(np.ascontiguousarray(a).tobytes()).hexdigest()
    return (problem.tag, problem.ensemble.n, digest)


def constraint_basis(problem: LinearProblem) -> np.ndarray:
    """Orthonormal nullspace basis of the problem's equality constraints (cached)."""
    key = _ceq_key(problem)
    c = _CEQ_CACHE.get(key)
    if c is None:
        c = nm.nullspace_basis(problem.eq_system[0])
        c.setflags(write=False)
        _CEQ_CACHE[key] = c
    return c


def _handle_zero(g: int, alpha: np.ndarray, policy: str, labels) -> None:
    if policy == "raise":
        raise ZeroProbability(f"configuration {g} ({labels[g]}): outcome(s) {alpha.tolist()} have p <= {P_FLOOR:g}")


def fisher_blocks(problem: EstimationProblem, surrogate, zero_policy: ZeroPolicy = "drop-terms", fd_step: float = 1e-5) -> FisherModel:
    """Per-configuration information matrices at a surrogate point.

    ``zero_policy`` decides what happens to outcomes with ``p <= 1e-12``:
    ``drop-terms`` omits those outcome terms (with a warning),
    ``drop-config`` zeroes the whole configuration block, ``raise`` aborts.
    """
    if zero_policy not in ("drop-terms", "drop-config", "raise"):
        raise ValueError(f"unknown zero policy {zero_policy!r}")
    if isinstance(problem, HamiltonianProblem):
        return _hamiltonian_blocks(problem, surrogate, zero_policy, fd_step)
    if not isinstance(problem, LinearProblem):
        raise TypeError("unsupported problem type")
    x = problem.to_coords(surrogate)
    c = constraint_basis(problem)
    d = c.shape[1]
    blocks = np.zeros((problem.n_configs, d, d))
    ref = np.zeros(problem.n_configs)
    dropped = []
    for g, rows in enumerate(problem.rows):
        p = rows @ x
        w = rows @ c
        small = p <= P_FLOOR
        if np.any(small):
            _handle_zero(g, np.flatnonzero(small), zero_policy, problem.labels)
            dropped.extend((g, int(a)) for a in np.flatnonzero(small))
            if zero_policy == "drop-config":
                continue
        keep = ~small
        wk = w[keep]
        blocks[g] = (wk.T / p[keep]) @ wk
        ref[g] = float(np.sum(rows[keep] ** 2 / p[keep, None]))
    blocks = 0.5 * (blocks + np.swapaxes(blocks, 1, 2))
    if dropped:
        _warn_dropped(dropped, zero_policy)
    return FisherModel(blocks, c, problem.tag, surrogate, problem.labels, tuple(dropped), ref)


def _warn_dropped(dropped, policy) -> None:
    cfgs = sorted({g for g, _ in dropped})
    what = "outcome terms" if policy == "drop-terms" else "configurations"
    warnings.warn(
        f"{len(dropped)} outcome(s) with p <= {P_FLOOR:g} in {len(cfgs)} configuration(s); {what} excluded",
        ZeroProbabilityWarning,
        stacklevel=3,
    )


def probability_derivatives(problem: HamiltonianProblem, theta, fd_step: float = 1e-5, fd_step2: float = 1e-4):
    """Central-difference gradient and Hessian of every probability.

    Returns ``(p, grad, hess)`` with shapes (n_cfg, n_out), (n_cfg, n_out, k)
    and (n_cfg, n_out, k, k). Gradient step ``h_i = fd_step * (1 + |theta_i|)``;
    the Hessian uses ``fd_step2`` since roundoff in a second difference grows
    like ``eps / h^2``.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    k = th.size
    h1 = fd_step * (1 + np.abs(th))
    h = fd_step2 * (1 + np.abs(th))
    f = problem.raw_probabilities
    p0 = f(th)
    grad = np.zeros(p0.shape + (k,))
    hess = np.zeros(p0.shape + (k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = h1[i]
        grad[..., i] = (f(th + e) - f(th - e)) / (2 * h1[i])
        e[i] = h[i]
        hess[..., i, i] = (f(th + e) - 2 * p0 + f(th - e)) / h[i] ** 2
    for i in range(k):
        for j in range(i + 1, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i], ej[j] = h[i], h[j]
            v = (f(th + ei + ej) - f(th + ei - ej) - f(th - ei + ej) + f(th - ei - ej)) / (4 * h[i] * h[j])
            hess[..., i, j] = hess[..., j, i] = v
    return p0, grad, hess


def _hamiltonian_blocks(problem: HamiltonianProblem, theta, policy: str, fd_step: float) -> FisherModel:
    if not problem.model.contains(theta):
        from .errors import InfeasiblePoint

        raise InfeasiblePoint("surrogate theta lies outside the parameter set")
    p, grad, hess = probability_derivatives(problem, theta, fd_step)
    n_cfg, _, k = grad.shape
    blocks = np.zeros((n_cfg, k, k))
    dropped = []
    for g in range(n_cfg):
        small = p[g] <= P_FLOOR
        if np.any(small):
            _handle_zero(g, np.flatnonzero(small), policy, problem.labels)
            dropped.extend((g, int(a)) for a in np.flatnonzero(small))
            if policy == "drop-config":
                continue
        keep = ~small
        gk = grad[g][keep]
        blocks[g] = (gk.T / p[g][keep]) @ gk - hess[g].sum(axis=0)
    blocks = 0.5 * (blocks + np.swapaxes(blocks, 1, 2))
    if dropped:
        _warn_dropped(dropped, policy)
    return FisherModel(blocks, None, problem.tag, np.atleast_1d(np.asarray(theta, dtype=float)), problem.labels, tuple(dropped))


def identifiability(model: FisherModel, allocation=None, cond_limit: float = COND_LIMIT) -> IdentifiabilityReport:
    """Rank, condition number and near-null directions of the aggregate matrix."""
    w = np.ones(model.n_configs) if allocation is None else np.asarray(allocation, dtype=float)
    g = model.aggregate(w)
    lam, vec = np.linalg.eigh(0.5 * (g + g.T))
    top = float(lam.max()) if lam.size else 0.0
    scale = max(top, model.scale(w))
    if top <= scale / cond_limit:
        return IdentifiabilityReport(0, np.inf, lam, vec, False)
    cond = top / lam.min() if lam.min() > 0 else np.inf
    weak = lam < scale / cond_limit
    rank = int(np.sum(~weak))
    return IdentifiabilityReport(rank, float(cond), lam, vec[:, weak], bool(not weak.any()))


def crb_value(model: FisherModel, allocation, cond_limit: float = COND_LIMIT) -> BoundReport:
    """``V = Tr G(allocation)^{-1}``; raises ``NotIdentifiable`` for singular G."""
    w = np.asarray(allocation, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("allocation must be non-negative and not all zero")
    rep = identifiability(model, w, cond_limit)
    if not rep.identifiable:
        raise NotIdentifiable(
            f"information matrix singular (rank {rep.rank} of {model.dim}, cond {rep.condition:.3e})",
            rep.null_directions,
        )
    g = model.aggregate(w)
    v = float(np.sum(1.0 / rep.eigenvalues))
    return BoundReport(v, g, rep.condition, True)


def min_experiments(v_lambda: float, v0: float) -> int:
    """Experiments needed so that ``V(lambda) / l_expt <= V0`` (rounded)."""
    return int(np.floor(v_lambda / v0 + 0.5))


def channel_det_R(a: complex, b: complex) -> float:
    """Determinant of the 3x3 identifiability matrix for the input ``(a, b)``.

    Equals ``(|b|^2 - |a|^2) Re(a conj(b))``.
    """
    a = complex(a)
    b = complex(b)
    if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > 1e-10:
        raise NotNormalized("|a|^2 + |b|^2 must equal 1")
    A, B = abs(a) ** 2, abs(b) ** 2
    r = np.array(
        [[A, B, 0.5], [B, A, 0.5], [a * b.conjugate(), a.conjugate() * b, 0]],
        dtype=complex,
    )
    return float(np.linalg.det(r).real)
