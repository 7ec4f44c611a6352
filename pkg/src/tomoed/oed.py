"""A-optimal experiment design over a simplex of configurations.

The relaxed problem minimizes ``V(lambda) = Tr G(lambda)^{-1}`` with
``G(lambda) = sum_gamma lambda_gamma G_gamma`` over the probability simplex.
The dual optimum is ``W = G^{-2} / V`` with ``Tr W G_gamma <= 1`` and
equality on the support; ``(Tr W^{1/2})^2 = V`` at optimality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _barrier
from .errors import (
    AllZero,
    CertificateFailed,
    NotIdentifiable,
    TruncationNotIdentifiable,
)
from .fisher import FisherModel, crb_value, identifiability, min_experiments

KKT_TOL = 1e-7
CS_TOL = 1e-6


@dataclass(frozen=True)
class DualCertificate:
    W: np.ndarray
    slacks: np.ndarray
    cs_residual: float
    dual_value: float
    gap: float
    strong_duality: float


@dataclass
class Design:
    lam: np.ndarray
    V: float
    labels: tuple
    newton_steps: int = 0
    barrier_gap: float = 0.0
    certificate: Optional[DualCertificate] = None
    l_expt: Optional[int] = None
    l_round: Optional[np.ndarray] = None
    bounds: Optional[tuple] = None

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.lam > 1e-9)

    def ranked(self, threshold: float = 0.0):
        """``(index, label, weight)`` sorted by descending weight (stable)."""
        order = np.argsort(-self.lam, kind="stable")
        return [(int(g), self.labels[g], float(self.lam[g])) for g in order if self.lam[g] > threshold]


@dataclass(frozen=True)
class RoundedDesign:
    l: np.ndarray
    l_expt: int
    total: int
    V_relaxed: float
    V_rounded: float

    @property
    def ratio(self) -> float:
        """``V(l_expt lambda) / V(l_round)``, at most 1 by construction."""
        return self.V_relaxed / self.V_rounded


@dataclass(frozen=True)
class Truncation:
    n_sub: int
    lam_sub: np.ndarray
    V_sub: float
    l_sub: int
    curve: tuple = field(default_factory=tuple)


def _value_grad_hess(blocks: np.ndarray, lam: np.ndarray, derivs: bool):
    g = np.tensordot(lam, blocks, axes=1)
    try:
        c = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        return np.inf, None, None
    ci = np.linalg.inv(c)
    v = float(np.sum(ci * ci))
    if not derivs:
        return v, None, None
    gi = ci.T @ ci
    a = np.einsum("ij,kjl->kil", gi, blocks)
    grad = -np.einsum("kij,ji->k", a, gi)
    ag = np.einsum("kij,jl->kil", a, gi)
    hess = 2 * np.einsum("kij,lji->kl", ag, a)
    return v, grad, 0.5 * (hess + hess.T)


def _simplex_basis(m: int) -> np.ndarray:
    # orthonormal basis of {z : sum z = 0}
    u, _, _ = np.linalg.svd(np.eye(m) - np.full((m, m), 1.0 / m))
    return u[:, : m - 1]


def solve_design(model: FisherModel, *, tol: float = _barrier.TOL, certify: bool = True) -> Design:
    """Relaxed A-optimal allocation by a barrier method on the simplex.

    Equality ``sum lambda = 1`` is eliminated with an orthonormal basis of
    its nullspace; the start point is the uniform allocation.
    """
    m = model.n_configs
    blocks = model.blocks
    rep = identifiability(model)
    if not rep.identifiable:
        raise NotIdentifiable(
            f"aggregate information matrix over all configurations is singular (rank {rep.rank} of {model.dim})",
            rep.null_directions,
        )
    if m == 1:
        lam = np.ones(1)
        v = crb_value(model, lam).V
        d = Design(lam, v, model.labels)
        if certify:
            d.certificate = dual_certificate(d, model)
        return d
    n = _simplex_basis(m)
    lam0 = np.full(m, 1.0 / m)

    def f(z, derivs):
        lam = lam0 + n @ z
        if np.any(lam <= 0):
            return np.inf, None, None
        v, g, h = _value_grad_hess(blocks, lam, derivs)
        if not derivs or not np.isfinite(v):
            return v, None, None
        return v, n.T @ g, n.T @ h @ n

    def phi(z, derivs):
        lam = lam0 + n @ z
        if np.any(lam <= 0):
            return np.inf, None, None
        v = -float(np.sum(np.log(lam)))
        if not derivs:
            return v, None, None
        return v, -n.T @ (1 / lam), (n.T * (1 / lam**2)) @ n

    res = _barrier.minimize(f, phi, np.zeros(m - 1), m, tol=tol)
    lam = np.clip(lam0 + n @ res.z, 0, None)
    lam = lam / lam.sum()
    v = crb_value(model, lam).V
    d = Design(lam, v, model.labels, newton_steps=res.newton_steps, barrier_gap=res.gap)
    if certify:
        d.certificate = dual_certificate(d, model)
    return d


def dual_certificate(d: Design, model: FisherModel, tol: float = CS_TOL) -> DualCertificate:
    """Dual matrix ``W = G^{-2}/V`` recovered from the primal and its residuals.

    Raises ``CertificateFailed`` when the complementary-slackness residual or
    the duality gap exceeds ten times ``tol``.
    """
    g = model.aggregate(d.lam)
    w_, u = np.linalg.eigh(g)
    v = float(np.sum(1 / w_))
    gi2 = (u / w_**2) @ u.T
    wmat = gi2 / v
    s = np.einsum("ij,kji->k", wmat, model.blocks)
    slacks = s - 1
    cs = float(np.max(d.lam * np.abs(slacks)))
    scale = max(1.0, float(s.max()))
    wh = np.linalg.eigvalsh(wmat)
    strong = float(np.sum(np.sqrt(np.clip(wh, 0, None))) ** 2)
    # W / scale is dual feasible with objective (Tr (W/scale)^{1/2})^2
    dual_value = strong / scale
    gap = v - dual_value
    if cs > 10 * tol or gap > 10 * tol * (1 + v):
        raise CertificateFailed(f"certificate residuals too large (cs {cs:.3e}, gap {gap:.3e})")
    return DualCertificate(0.5 * (wmat + wmat.T), slacks, cs, dual_value, gap, strong)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def round_design(d: Design, model: FisherModel, l_expt: int) -> RoundedDesign:
    """``l = round(l_expt * lambda)`` with both bound values attached.

    The rounded total is reported and generally differs from ``l_expt``.
    """
    if l_expt < 1:
        raise ValueError("l_expt must be at least 1")
    l = _round_half_away(l_expt * d.lam)
    if not np.any(l > 0):
        raise AllZero(f"every entry of {l_expt} * lambda rounds to zero")
    v_rel = d.V / l_expt
    v_rnd = crb_value(model, l.astype(float)).V
    out = RoundedDesign(l, int(l_expt), int(l.sum()), v_rel, v_rnd)
    d.l_expt, d.l_round, d.bounds = int(l_expt), l, (v_rnd, v_rel)
    return out


def top_k(lam: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest weights; ties keep the lower index."""
    return np.sort(np.argsort(-np.asarray(lam), kind="stable")[:k])


def truncate_design(d: Design, model: FisherModel, n_sub: int, v0: float, curve: bool = True) -> Truncation:
    """Keep the ``n_sub`` largest weights, renormalize, and count experiments.

    ``l_sub = round(V(lambda_sub) / V0)``. The tradeoff curve lists
    ``(k, l_k)`` for k = 1..number of positive weights, with ``None`` where
    the kept support is not identifiable.
    """
    if not 1 <= n_sub <= d.lam.size:
        raise ValueError(f"n_sub must lie in 1..{d.lam.size}")
    lam_sub = _truncated(d.lam, n_sub)
    try:
        v_sub = crb_value(model, lam_sub).V
    except NotIdentifiable as exc:
        raise TruncationNotIdentifiable(f"top-{n_sub} support is not identifiable", exc.null_directions) from exc
    pts = []
    if curve:
        n_pos = int(np.sum(d.lam > 0))
        for k in range(1, max(n_pos, n_sub) + 1):
            try:
                pts.append((k, min_experiments(crb_value(model, _truncated(d.lam, k)).V, v0)))
            except NotIdentifiable:
                pts.append((k, None))
    return Truncation(n_sub, lam_sub, v_sub, min_experiments(v_sub, v0), tuple(pts))


def _truncated(lam: np.ndarray, k: int) -> np.ndarray:
    idx = top_k(lam, k)
    out = np.zeros_like(lam)
    out[idx] = lam[idx]
    s = out.sum()
    if s <= 0:
        out[idx] = 1.0 / k
    else:
        out = out / s
    return out


def uniform_on(indices, m: int) -> np.ndarray:
    """Uniform allocation over the given configuration indices."""
    idx = np.asarray(list(indices), dtype=int)
    out = np.zeros(m)
    out[idx] = 1.0 / idx.size
    return out


def bootstrap(problem, truth, initial_allocation, rounds: int, l_expt: int, seed: int = 0, estimate=None):
    """Alternate estimation and redesign with the estimate as surrogate.

    Round k samples counts with the previous integer allocation, estimates,
    rebuilds the Fisher blocks at the estimate and redesigns. Returns a list
    of per-round dicts with keys ``estimate``, ``lam``, ``l`` and ``V``.
    Nothing about monotonicity or convergence is asserted.
    """
    from . import estimator, simlab
    from .fisher import fisher_blocks

    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    est = estimate or estimator.estimate
    rng = simlab.RngStream(seed)
    l = np.asarray(initial_allocation, dtype=np.int64)
    trace = []
    for _ in range(rounds):
        data = simlab.sample_counts(problem, truth, l, rng)
        rep = est(problem, data)
        model = fisher_blocks(problem, rep.estimate)
        d = solve_design(model)
        l = _round_half_away(l_expt * d.lam)
        trace.append({"estimate": rep.estimate, "lam": d.lam, "l": l, "V": d.V})
    return trace
