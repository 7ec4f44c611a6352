"""Maximum-likelihood and least-squares estimators.

Convex cases share one path: coordinates ``x = x0 + C z`` with ``C`` a
basis for the equality-constraint nullspace, the negative log-likelihood
divided by the total count as objective, and log barriers for the cone
(``-log det`` or ``-sum log``) plus optional purity and trace-cap terms.
Hamiltonian estimation is non-convex and uses a grid scan followed by
coordinate-wise Newton refinement.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _barrier
from . import numerics as nm
from .errors import (
    DimensionMismatch,
    EmptyGrid,
    InfeasibleTraceCap,
    SingularNormalEquations,
    TomoEDError,
    ZeroProbabilityOutcome,
)
from .fisher import constraint_basis, fisher_blocks, identifiability
from .qmodel import (
    CountData,
    DensityMatrix,
    EstimationProblem,
    HamiltonianProblem,
    LinearProblem,
    OsrDistributionProblem,
    StateDistributionProblem,
    StateProblem,
    Superoperator,
    SuperoperatorProblem,
)

FORCED_ZERO = 1e-14


@dataclass
class EstimateReport:
    estimate: object
    objective: float
    lower_bound: float
    gap: float
    iterations: int
    kkt_residual: float = 0.0
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LikelihoodSpec:
    problem: EstimationProblem
    data: CountData
    purity: bool = False
    trace_cap: Optional[float] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data.check_shape(self.problem.outcome_shape())

    def solve(self, method: Optional[str] = None) -> "EstimateReport":
        kw = {}
        if self.purity:
            method = method or "mle-state-pure"
        if self.trace_cap is not None:
            kw["trace_cap"] = self.trace_cap
        if self.weights is not None:
            kw["weights"] = self.weights
        return estimate(self.problem, self.data, method, **kw)


def empirical_lower_bound(data: CountData) -> float:
    """``-sum n log(n / l)``, the likelihood of the empirical frequencies."""
    total = 0.0
    for c in data.counts:
        l = c.sum()
        nz = c[c > 0]
        total -= float(np.sum(nz * np.log(nz / l)))
    return total


def neg_log_likelihood(problem: EstimationProblem, data: CountData, point) -> float:
    """``L = -sum n log p`` with zero-count terms dropped; +inf if a counted p vanishes."""
    ps = problem.probabilities(point)
    return _nll(ps, data.counts)


def _nll(ps, counts) -> float:
    total = 0.0
    for p, c in zip(ps, counts):
        m = c > 0
        if np.any(p[m] <= 0):
            return np.inf
        total -= float(np.sum(c[m] * np.log(p[m])))
    return total


# ------------------------------------------------------------ convex core


class _Cone:
    """Barrier for the problem's cone in full coordinates ``x``."""

    def __init__(self, problem: LinearProblem):
        self.kind = problem.cone
        self.basis = problem.cone_basis
        self.degree = self.basis.shape[1] if self.kind == "psd" else problem.dim

    def __call__(self, x, derivs):
        if self.kind == "nonneg":
            if np.any(x <= 0):
                return np.inf, None, None
            v = -float(np.sum(np.log(x)))
            if not derivs:
                return v, None, None
            return v, -1 / x, np.diag(1 / x**2)
        m = np.tensordot(x, self.basis, axes=1)
        try:
            c = np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            return np.inf, None, None
        v = -2 * float(np.sum(np.log(np.diag(c).real)))
        if not derivs:
            return v, None, None
        mi = np.linalg.inv(m)
        a = np.einsum("ij,kjl->kil", mi, self.basis)
        grad = -np.einsum("kii->k", a).real
        hess = np.einsum("kij,lji->kl", a, a).real
        return v, grad, 0.5 * (hess + hess.T)


def _stack(problem: LinearProblem, data: CountData):
    rows, wts = [], []
    x0 = problem.interior_coords()
    for g, (r, c) in enumerate(zip(problem.rows, data.counts)):
        m = c > 0
        if not np.any(m):
            continue
        rr = r[m]
        if np.any(rr @ x0 <= FORCED_ZERO):
            bad = [int(a) for a in np.flatnonzero(m)[rr @ x0 <= FORCED_ZERO]]
            raise ZeroProbabilityOutcome(
                f"configuration {g} ({problem.labels[g]}): outcome(s) {bad} counted but have zero probability everywhere"
            )
        rows.append(rr)
        wts.append(c[m].astype(float))
    if not rows:
        raise DimensionMismatch("data contain no counts")
    return np.vstack(rows), np.concatenate(wts)


def _solve_convex(problem: LinearProblem, data: CountData, *, objective, extra_barriers=(), extra_degree=0, total_tol=None):
    """Generic barrier solve in nullspace coordinates.

    ``objective(x, derivs)`` is in full coordinates; barriers likewise.
    """
    c = constraint_basis(problem)
    x0 = problem.interior_coords()
    cone = _Cone(problem)
    barriers = (cone,) + tuple(extra_barriers)
    m = cone.degree + extra_degree

    def lift(fun):
        def g(z, derivs):
            x = x0 + c @ z
            v, gr, h = fun(x, derivs)
            if not derivs or not np.isfinite(v):
                return v, None, None
            return v, c.T @ gr, c.T @ h @ c

        return g

    def phi(x, derivs):
        tot, gt, ht = 0.0, 0.0, 0.0
        for b in barriers:
            v, gr, h = b(x, derivs)
            if not np.isfinite(v):
                return np.inf, None, None
            tot += v
            if derivs:
                gt = gt + gr
                ht = ht + h
        return tot, (gt if derivs else None), (ht if derivs else None)

    tol = _barrier.TOL if total_tol is None else min(_barrier.TOL, total_tol)
    res = _barrier.minimize(lift(objective), lift(phi), np.zeros(c.shape[1]), m, tol=tol)
    x = x0 + c @ res.z
    # KKT residual: gradient of the objective projected on the tangent space,
    # measured against the barrier-scaled optimality condition
    _, g, _ = objective(x, True)
    _, gb, _ = phi(x, True)
    t = 1.0 / (res.gap / m) if res.gap > 0 else np.inf
    kkt = float(np.linalg.norm(c.T @ (g + gb / t)))
    return x, res, kkt


def _nll_objective(a: np.ndarray, n: np.ndarray):
    w = n / n.sum()

    def f(x, derivs):
        p = a @ x
        if np.any(p <= 0):
            return np.inf, None, None
        v = -float(w @ np.log(p))
        if not derivs:
            return v, None, None
        r = w / p
        return v, -(a.T @ r), (a.T * (r / p)) @ a

    return f


def _mle_linear(problem: LinearProblem, data: CountData, extra_barriers=(), extra_degree=0):
    data.check_shape(problem.outcome_shape())
    a, n = _stack(problem, data)
    lb = empirical_lower_bound(data)
    total = float(n.sum())
    # normalized units; the floor keeps boundary components below 1e-8
    tol = min(1e-7 * (1 + lb) / total, 1e-11)
    x, res, kkt = _solve_convex(
        problem, data, objective=_nll_objective(a, n), extra_barriers=extra_barriers, extra_degree=extra_degree, total_tol=tol
    )
    p = a @ x
    obj = -float(n @ np.log(p))
    return x, obj, lb, res, kkt


def _identifiable_flag(problem, estimate, data) -> Optional[bool]:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = fisher_blocks(problem, estimate)
        return identifiability(model, data.trials.astype(float)).identifiable
    except Exception:
        return None


def _state_diagnostics(rho: np.ndarray) -> dict:
    w = np.linalg.eigvalsh(rho)
    return {
        "eigenvalues": w[::-1].tolist(),
        "purity": float(np.sum(w**2)),
        "rank": int(np.sum(w > 1e-6)),
    }


def _density(problem: StateProblem, x) -> DensityMatrix:
    m = nm.hermitize(problem.from_coords(x))
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0, None)
    m = (v * w) @ nm.dag(v)
    return DensityMatrix(m / np.trace(m).real)


def mle_state(problem: StateProblem, data: CountData) -> EstimateReport:
    """Maximum-likelihood density matrix."""
    x, obj, lb, res, kkt = _mle_linear(problem, data)
    rho = _density(problem, x)
    diag = _state_diagnostics(rho.matrix)
    diag["identifiable"] = _identifiable_flag(problem, rho, data)
    return EstimateReport(rho, obj, lb, obj - lb, res.newton_steps, kkt, diag)


def _purity_barrier(x, derivs):
    # orthonormal Hermitian basis: Tr rho^2 = |x|^2
    s = float(x @ x)
    if s >= 1:
        return np.inf, None, None
    v = -float(np.log1p(-s))
    if not derivs:
        return v, None, None
    d = 1 - s
    return v, 2 * x / d, 2 * np.eye(x.size) / d + 4 * np.outer(x, x) / d**2


def mle_state_pure_relaxed(problem: StateProblem, data: CountData) -> EstimateReport:
    """MLE with the convex purity relaxation ``Tr rho^2 <= 1``.

    ``diagnostics['pure_found']`` is set when the solution lies on the
    purity boundary (``Tr rho^2 >= 1 - 1e-6``); purity is never forced.
    """
    x, obj, lb, res, kkt = _mle_linear(problem, data, extra_barriers=(_purity_barrier,), extra_degree=1)
    rho = _density(problem, x)
    diag = _state_diagnostics(rho.matrix)
    diag["pure_found"] = diag["purity"] >= 1 - 1e-6
    return EstimateReport(rho, obj, lb, obj - lb, res.newton_steps, kkt, diag)


def ls_state(problem: StateProblem, data: CountData, keep_psd: bool = True, weights=None) -> EstimateReport:
    """Weighted least squares on empirical frequencies.

    Default weights ``w_gamma = l_gamma / l_expt``. ``keep_psd=False``
    solves the equality-constrained normal equations directly and reports
    negative eigenvalues instead of clipping them.
    """
    data.check_shape(problem.outcome_shape())
    trials = data.trials.astype(float)
    w = trials / trials.sum() if weights is None else np.asarray(weights, dtype=float)
    if w.shape != trials.shape or np.any(w < 0):
        raise DimensionMismatch("weights must be non-negative, one per configuration")
    freqs = data.frequencies()
    a = np.vstack(problem.rows)
    f = np.concatenate(freqs)
    ww = np.concatenate([np.full(len(fr), wi) for fr, wi in zip(freqs, w)])
    c = constraint_basis(problem)
    x0 = problem.interior_coords()
    ac = a @ c
    lb = empirical_lower_bound(data)

    def report(x, iters, kkt, extra):
        m = nm.hermitize(problem.from_coords(x))
        ev = np.linalg.eigvalsh(m)
        resid = a @ x - f
        diag = {"residual": float(ww @ resid**2), "eigenvalues": ev[::-1].tolist(), **extra}
        ps = problem.rows
        obj = _nll([r @ x for r in ps], data.counts)
        return EstimateReport(m, obj, lb, obj - lb if np.isfinite(obj) else np.inf, iters, kkt, diag)

    if not keep_psd:
        nmat = ac.T @ (ww[:, None] * ac)
        ev = np.linalg.eigvalsh(nmat)
        if ev.min() <= ev.max() * 1e-12:
            raise SingularNormalEquations("normal equations are singular; the data do not determine the state")
        z = np.linalg.solve(nmat, ac.T @ (ww * (f - a @ x0)))
        x = x0 + c @ z
        neg = [float(v) for v in np.linalg.eigvalsh(nm.hermitize(problem.from_coords(x))) if v < 0]
        return report(x, 1, 0.0, {"negative_eigenvalues": neg, "psd": not neg})

    def obj(x, derivs):
        r = a @ x - f
        v = float(ww @ r**2)
        if not derivs:
            return v, None, None
        return v, 2 * a.T @ (ww * r), 2 * (a.T * ww) @ a

    x, res, kkt = _solve_convex(problem, data, objective=obj)
    rho = _density(problem, x)
    return report(problem.to_coords(rho), res.newton_steps, kkt, {"negative_eigenvalues": [], "psd": True})


def _simplex_estimate(x) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float), 0, None)
    return x / x.sum()


def _face_problem(problem, keep):
    if isinstance(problem, StateDistributionProblem):
        return StateDistributionProblem(problem.ensemble, [problem.inputs[k] for k in keep])
    return OsrDistributionProblem(problem.ensemble, [problem.components[k] for k in keep])


def _polish_simplex(problem, data, q, obj, solve, rel=1e-4, kkt_tol=1e-7):
    """Active-set crossover for simplex estimates.

    Exact data that sits on a face has zero multipliers there, so the barrier
    iterate approaches the face only like sqrt(mu). Components below
    ``rel * max(q)`` are dropped, the face problem is re-solved, and the face
    point is kept if it is no worse and satisfies first-order optimality on
    the full simplex.
    """
    keep = np.flatnonzero(q > rel * q.max())
    if keep.size == q.size:
        return None
    try:
        sub = solve(_face_problem(problem, keep), data)
    except TomoEDError:
        return None
    cand = np.zeros_like(q)
    cand[keep] = sub.estimate
    a, n = _stack(problem, data)
    p = a @ cand
    if np.any(p <= 0):
        return None
    new_obj = -float(n @ np.log(p))
    if new_obj > obj + 1e-9 * (1 + abs(obj)):
        return None
    # normalized gradient; the simplex multiplier on the face is -1
    g = -(a.T @ (n / p)) / n.sum()
    if np.any(g + 1 < -kkt_tol):
        return None
    return cand, new_obj, sub


def mle_state_distribution(problem: StateDistributionProblem, data: CountData) -> EstimateReport:
    """ML weights over known input states."""
    if problem.dim == 1:
        f = np.ones(1)
        obj = neg_log_likelihood(problem, data, f)
        lb = empirical_lower_bound(data)
        return EstimateReport(f, obj, lb, obj - lb, 0, 0.0, {"identifiable": True})
    return _simplex_report(problem, data, mle_state_distribution)


def mle_osr_distribution(problem: OsrDistributionProblem, data: CountData) -> EstimateReport:
    """ML occurrence probabilities of known channel components."""
    if problem.dim == 1:
        q = np.ones(1)
        obj = neg_log_likelihood(problem, data, q)
        lb = empirical_lower_bound(data)
        return EstimateReport(q, obj, lb, obj - lb, 0, 0.0, {"identifiable": True})
    return _simplex_report(problem, data, mle_osr_distribution)


def _simplex_report(problem, data, solve) -> EstimateReport:
    x, obj, lb, res, kkt = _mle_linear(problem, data)
    q = _simplex_estimate(x)
    steps, polished = res.newton_steps, False
    face = _polish_simplex(problem, data, q, obj, solve)
    if face is not None:
        q, obj, sub = face
        steps += sub.iterations
        kkt = max(kkt, sub.kkt_residual)
        polished = True
    diag = {"identifiable": _identifiable_flag(problem, q, data), "face_polished": polished}
    return EstimateReport(q, obj, lb, obj - lb, steps, kkt, diag)


def mle_superoperator(problem: SuperoperatorProblem, data: CountData, trace_cap: Optional[float] = None) -> EstimateReport:
    """ML superoperator X under PSD and completeness constraints.

    For an orthonormal basis every trace-preserving X has ``Tr X = n``, so a
    cap ``eta < n`` is infeasible and ``eta >= n`` is implied; the cap is
    validated and echoed but adds no barrier term.
    """
    n = problem.ensemble.n
    if trace_cap is not None:
        if not np.isfinite(trace_cap) or trace_cap < n - 1e-8:
            raise InfeasibleTraceCap(f"trace cap {trace_cap} is below Tr X = {n} of every trace-preserving map")
    x, obj, lb, res, kkt = _mle_linear(problem, data)
    xm = nm.hermitize(problem.from_coords(x))
    w, v = np.linalg.eigh(xm)
    s = w[::-1]
    est = Superoperator(xm, problem.basis)
    diag = {
        "singular_values": s.tolist(),
        "rank": int(np.sum(s > 1e-6)),
        "trace": float(np.trace(xm).real),
        "trace_cap": trace_cap,
        # Tr X = n for every feasible X, so the cap never moves the solution
        "trace_cap_slack": None if trace_cap is None else float(trace_cap - np.trace(xm).real),
        "convention": problem.convention,
    }
    return EstimateReport(est, obj, lb, obj - lb, res.newton_steps, kkt, diag)


# ------------------------------------------------------------ Hamiltonian


def _grid_axes(model, points: int):
    if points < 1:
        raise EmptyGrid("grid needs at least one point per dimension")
    return [np.unique(np.linspace(lo, hi, points)) for lo, hi in zip(model.lower, model.upper)]


def mle_hamiltonian(problem: HamiltonianProblem, data: CountData, grid_points: int = 201, refine: bool = True, max_refine: int = 10) -> EstimateReport:
    """Grid scan over the parameter box followed by coordinate Newton refinement.

    The report lists every grid-local minimum (``diagnostics['local_minima']``);
    equal-likelihood ties resolve to the lexicographically smallest theta.
    """
    data.check_shape(problem.outcome_shape())
    model = problem.model
    axes = _grid_axes(model, grid_points)
    counts = data.counts
    total = max(data.total, 1)
    lb = empirical_lower_bound(data)

    def nll(th):
        if not model.contains(th):
            return np.inf
        return _nll(problem.raw_probabilities(th), counts)

    shape = tuple(len(a) for a in axes)
    vals = np.full(shape, np.inf)
    for idx in itertools.product(*(range(s) for s in shape)):
        th = np.array([axes[i][j] for i, j in enumerate(idx)])
        vals[idx] = nll(th)
    if not np.any(np.isfinite(vals)):
        raise EmptyGrid("no grid point inside the parameter set has finite likelihood")
    minima = _grid_local_minima(vals)
    cands = sorted(((vals[i], tuple(axes[d][k] for d, k in enumerate(i))) for i in minima), key=lambda t: (t[0], t[1]))
    best_val = cands[0][0]
    ties = [th for v, th in cands if v <= best_val + 1e-9 * max(1.0, abs(best_val))]
    steps = [a[1] - a[0] if len(a) > 1 else 0.0 for a in axes]
    results = []
    for v, th in cands[: max_refine if refine else 1]:
        if refine:
            th2, v2, gnorm = _coordinate_newton(nll, np.array(th), model, steps, total)
        else:
            th2, v2, gnorm = np.array(th), v, np.nan
        results.append((v2, tuple(th2), gnorm))
    results.sort(key=lambda t: (t[0], t[1]))
    v, th, gnorm = results[0]
    diag = {
        "local_minima": [{"theta": list(t), "objective": float(val)} for val, t in cands],
        "ties": [list(t) for t in ties],
        "grad_norm": float(gnorm),
        "grid_points": grid_points,
    }
    return EstimateReport(np.array(th), float(v), lb, float(v) - lb, len(results), float(gnorm) if np.isfinite(gnorm) else 0.0, diag)


def _grid_local_minima(vals: np.ndarray) -> list:
    """Indices whose value is finite and no larger than every axis neighbour."""
    out = []
    for idx in itertools.product(*(range(s) for s in vals.shape)):
        v = vals[idx]
        if not np.isfinite(v):
            continue
        ok = True
        for d in range(vals.ndim):
            for step in (-1, 1):
                j = list(idx)
                j[d] += step
                if 0 <= j[d] < vals.shape[d] and vals[tuple(j)] < v:
                    ok = False
        if ok:
            out.append(idx)
    return out


def _coordinate_newton(nll, th, model, steps, total, max_iter: int = 100, gtol: float = 1e-6):
    th = np.array(th, dtype=float)
    f = lambda x: nll(x) / total
    fv = f(th)
    gnorm = np.inf
    for _ in range(max_iter):
        grads = []
        moved = False
        for i in range(th.size):
            h = 1e-5 * (1 + abs(th[i]))
            e = np.zeros_like(th)
            e[i] = h
            fp, fm = f(th + e), f(th - e)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                # one-sided near bounds
                if np.isfinite(fp):
                    d1, d2 = (fp - fv) / h, 0.0
                elif np.isfinite(fm):
                    d1, d2 = (fv - fm) / h, 0.0
                else:
                    grads.append(0.0)
                    continue
            else:
                d1 = (fp - fm) / (2 * h)
                d2 = (fp - 2 * fv + fm) / h**2
            at_lo = th[i] <= model.lower[i] + 1e-12 and d1 > 0
            at_hi = th[i] >= model.upper[i] - 1e-12 and d1 < 0
            grads.append(0.0 if (at_lo or at_hi) else d1)
            if at_lo or at_hi:
                continue
            step = -d1 / d2 if d2 > 0 else -np.sign(d1) * max(steps[i], 1e-8) / 2
            s = 1.0
            while s > 1e-12:
                cand = th.copy()
                cand[i] = np.clip(th[i] + s * step, model.lower[i], model.upper[i])
                cv = f(cand)
                if cv <= fv:
                    moved = moved or cv < fv
                    th, fv = cand, cv
                    break
                s *= 0.5
        gnorm = float(np.linalg.norm(grads))
        # a stalled line search means the finite-difference model is exhausted
        if gnorm <= gtol or not moved:
            break
    return th, fv * total, gnorm


# ------------------------------------------------------------ dispatch

METHODS = {
    "mle-state": mle_state,
    "mle-state-pure": mle_state_pure_relaxed,
    "ls-state": ls_state,
    "mle-distribution": mle_state_distribution,
    "mle-osr": mle_superoperator,
    "mle-osr-distribution": mle_osr_distribution,
    "mle-hamiltonian": mle_hamiltonian,
}

_DEFAULT = {
    "state": "mle-state",
    "state-distribution": "mle-distribution",
    "superoperator": "mle-osr",
    "osr-distribution": "mle-osr-distribution",
    "hamiltonian": "mle-hamiltonian",
}


def estimate(problem: EstimationProblem, data: CountData, method: Optional[str] = None, **kw) -> EstimateReport:
    """Run the default (or named) estimator for the problem's parameterization."""
    name = method or _DEFAULT[problem.tag]
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}")
    return METHODS[name](problem, data, **kw)
