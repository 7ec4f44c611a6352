"""Primal barrier method with damped Newton centering steps.

Minimizes ``f(z)`` over the interior of a convex set described by a
self-concordant barrier ``phi(z)`` of degree ``m``. Equality constraints are
expected to be eliminated by the caller (``x = x0 + C z``), so every
centering problem is unconstrained.

Schedule: mu starts at ``mu0`` and shrinks by ``factor`` until ``m * mu``
falls below ``tol``; the final ``m * mu`` bounds the suboptimality.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import SolverMaxIter

# f(z, derivs) -> (value, grad, hess); value is +inf outside the domain.
Oracle = Callable[[np.ndarray, bool], Tuple[float, Optional[np.ndarray], Optional[np.ndarray]]]

MU0 = 1.0
FACTOR = 10.0
TOL = 1e-9
ALPHA = 0.01
BETA = 0.5


@dataclass(frozen=True)
class BarrierResult:
    z: np.ndarray
    value: float
    gap: float
    newton_steps: int
    outer_steps: int


def _newton_direction(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    try:
        c = np.linalg.cholesky(h)
        y = np.linalg.solve(c, -g)
        return np.linalg.solve(c.T, y)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(0.5 * (h + h.T))
        floor = max(float(w.max()), 1.0) * 1e-14
        return -(v @ ((v.T @ g) / np.maximum(w, floor)))


def minimize(
    f: Oracle,
    phi: Oracle,
    z0: np.ndarray,
    m: float,
    *,
    mu0: float = MU0,
    factor: float = FACTOR,
    tol: float = TOL,
    alpha: float = ALPHA,
    beta: float = BETA,
    max_newton: int = 100,
    max_total: int = 5000,
) -> BarrierResult:
    z = np.array(z0, dtype=float)
    fv, _, _ = f(z, False)
    pv, _, _ = phi(z, False)
    if not (np.isfinite(fv) and np.isfinite(pv)):
        raise ValueError("starting point is not strictly feasible")
    mu = mu0
    total = 0
    outer = 0
    while True:
        outer += 1
        t = 1.0 / mu
        for _ in range(max_newton):
            fv, fg, fh = f(z, True)
            pv, pg, ph = phi(z, True)
            val = t * fv + pv
            g = t * fg + pg
            h = t * fh + ph
            dz = _newton_direction(h, g)
            slope = float(g @ dz)
            total += 1
            if -slope / 2 <= 1e-12:
                break
            step = 1.0
            accepted = False
            while step > 1e-16:
                zn = z + step * dz
                fn, _, _ = f(zn, False)
                if np.isfinite(fn):
                    pn, _, _ = phi(zn, False)
                    vn = t * fn + pn
                    if np.isfinite(vn) and (
                        vn <= val + alpha * step * slope
                        or vn - val <= 1e-13 * max(1.0, abs(val))
                    ):
                        accepted = True
                        break
                step *= beta
            if not accepted:
                break
            z = zn
            if total >= max_total:
                raise SolverMaxIter(f"barrier method exceeded {max_total} Newton steps")
        if m * mu <= tol:
            break
        mu /= factor
    fv, _, _ = f(z, False)
    return BarrierResult(z=z, value=float(fv), gap=float(m * mu), newton_steps=total, outer_steps=outer)
