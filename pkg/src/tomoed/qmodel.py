"""Measurement and process models.

Density matrices, POVMs, detector-noise mixing, Kraus maps and superoperators,
plus the five estimation problem families. Every problem exposes
``probabilities(point)`` returning one outcome-probability vector per
configuration.

Linear problems (state, state distribution, superoperator, OSR
distribution) additionally expose real coordinates ``x`` with
``p_alpha_gamma = rows[gamma][alpha] . x``, an equality system
``eq_matrix x = eq_rhs`` and a cone (``psd`` or ``nonneg``). The fisher,
estimator and oed modules work on that common structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from . import numerics as nm
from .errors import (
    BadBasis,
    DimensionMismatch,
    InfeasiblePoint,
    InvalidKraus,
    InvalidMixer,
    InvalidPovm,
    InvalidState,
    NotPSD,
)

STATE_TOL = 1e-10
POVM_TOL = 1e-10
KRAUS_TOL = 1e-8
POINT_TOL = 1e-8
NEG_CLAMP = 1e-12

Convention = Literal["consistent", "literal"]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _check_psd(m: np.ndarray, tol: float) -> bool:
    return float(np.linalg.eigvalsh(nm.hermitize(m)).min()) >= -tol


# ---------------------------------------------------------------- states


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = nm.as_cmat(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise InvalidState("density matrix must be square")
        if not nm.is_hermitian(m, STATE_TOL):
            raise InvalidState("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1) > STATE_TOL:
            raise InvalidState(f"trace is {np.trace(m).real:.12g}, expected 1")
        if not _check_psd(m, STATE_TOL):
            raise InvalidState("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", _frozen(nm.hermitize(m)))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, n: int) -> "DensityMatrix":
        return cls(np.eye(n) / n)

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)


def as_density(point) -> DensityMatrix:
    if isinstance(point, DensityMatrix):
        return point
    m = nm.as_cmat(point)
    if not nm.is_hermitian(m, POINT_TOL) or abs(np.trace(m).real - 1) > POINT_TOL or not _check_psd(m, POINT_TOL):
        raise InfeasiblePoint("point is not a density matrix within 1e-8")
    # clip eigenvalue noise inside the tolerance band
    w, v = np.linalg.eigh(nm.hermitize(m))
    w = np.clip(w, 0, None)
    m = (v * w) @ nm.dag(v)
    return DensityMatrix(m / np.trace(m).real)


# ----------------------------------------------------------------- POVMs


@dataclass(frozen=True, eq=False)
class PovmSet:
    elements: tuple
    labels: tuple = ()

    def __post_init__(self):
        els = [nm.as_cmat(e) for e in self.elements]
        if not els:
            raise InvalidPovm("POVM has no elements")
        n = els[0].shape[0]
        for e in els:
            if e.shape != (n, n):
                raise DimensionMismatch("POVM elements differ in shape")
            if not nm.is_hermitian(e, POVM_TOL):
                raise InvalidPovm("POVM element is not Hermitian")
            if not _check_psd(e, POVM_TOL):
                raise InvalidPovm("POVM element is not PSD")
        if not np.allclose(sum(els), np.eye(n), rtol=0, atol=POVM_TOL):
            raise InvalidPovm("POVM elements do not sum to the identity")
        labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(len(els)))
        if len(labels) != len(els):
            raise InvalidPovm("label count differs from element count")
        object.__setattr__(self, "elements", tuple(_frozen(nm.hermitize(e)) for e in els))
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)

    def stacked(self) -> np.ndarray:
        return np.array(self.elements)


def computational_povm(n: int) -> PovmSet:
    els = []
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1
        els.append(e)
    return PovmSet(tuple(els), tuple(f"|{i}>" for i in range(n)))


@dataclass(frozen=True, eq=False)
class NoiseMixer:
    """Conditional probabilities nu[alpha, beta] of reporting alpha given clean outcome beta."""

    nu: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        if nu.ndim != 2:
            raise InvalidMixer("mixer must be a matrix")
        if np.any(nu < -1e-15) or np.any(nu > 1 + 1e-15):
            raise InvalidMixer("mixer entries must lie in [0, 1]")
        if not np.allclose(nu.sum(axis=0), 1.0, rtol=0, atol=1e-12):
            raise InvalidMixer("every mixer column must sum to 1")
        nu = nu.copy()
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(nu.shape[0]))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def identity(cls, k: int) -> "NoiseMixer":
        return cls(np.eye(k))


def apply_noise(clean: PovmSet, mixer: NoiseMixer) -> PovmSet:
    """Noisy POVM ``M_alpha = sum_beta nu[alpha, beta] Mbar_beta``."""
    if mixer.nu.shape[1] != len(clean):
        raise DimensionMismatch(f"mixer has {mixer.nu.shape[1]} columns for {len(clean)} clean outcomes")
    els = np.tensordot(mixer.nu, clean.stacked(), axes=1)
    return PovmSet(tuple(els), mixer.labels)


def tensor_povm(a: PovmSet, b: PovmSet) -> PovmSet:
    els = tuple(np.kron(x, y) for x in a.elements for y in b.elements)
    labels = tuple(f"{la}{lb}" for la in a.labels for lb in b.labels)
    return PovmSet(els, labels)


# ------------------------------------------------------- Kraus and OSR maps


@dataclass(frozen=True, eq=False)
class KrausSet:
    ops: tuple

    def __post_init__(self):
        ops = [nm.as_cmat(k) for k in self.ops]
        if not ops:
            raise InvalidKraus("empty Kraus set")
        n = ops[0].shape[0]
        if any(k.shape != (n, n) for k in ops):
            raise DimensionMismatch("Kraus operators differ in shape")
        s = sum(nm.dag(k) @ k for k in ops)
        if not np.allclose(s, np.eye(n), rtol=0, atol=KRAUS_TOL):
            raise InvalidKraus("Kraus operators are not trace preserving")
        object.__setattr__(self, "ops", tuple(_frozen(k) for k in ops))

    @property
    def n(self) -> int:
        return self.ops[0].shape[0]

    def __len__(self) -> int:
        return len(self.ops)

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho)
        return sum(k @ rho @ nm.dag(k) for k in self.ops)


def povm_pullback(kraus: KrausSet, m: PovmSet) -> PovmSet:
    """Effective POVM ``O_alpha = sum_k K_k^H M_alpha K_k``."""
    if kraus.n != m.n:
        raise DimensionMismatch("Kraus and POVM dimensions differ")
    els = tuple(sum(nm.dag(k) @ e @ k for k in kraus.ops) for e in m.elements)
    return PovmSet(els, m.labels)


def _check_basis(basis) -> np.ndarray:
    b = np.asarray(basis, dtype=complex)
    if b.ndim != 3 or b.shape[1] != b.shape[2] or b.shape[0] != b.shape[1] ** 2:
        raise BadBasis(f"basis must hold n^2 matrices of size n x n, got shape {b.shape}")
    if np.linalg.matrix_rank(nm.stack_vecs(b)) < b.shape[0]:
        raise BadBasis("basis matrices do not span the matrix space")
    return b


def completeness_terms(basis) -> np.ndarray:
    """``S[i, j] = B_i^H B_j``, shape (n^2, n^2, n, n)."""
    b = _check_basis(basis)
    return np.einsum("iba,jbc->ijac", b.conj(), b)


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Channel coefficients X in a fixed operator basis.

    Kraus operators expand as ``K_k = sum_i a_ki B_i`` and
    ``X_ij = sum_k conj(a_ki) a_kj``, so ``sum_ij X_ij B_i^H B_j = I`` is
    trace preservation.
    """

    X: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        b = _check_basis(self.basis)
        x = nm.as_cmat(self.X)
        if x.shape != (b.shape[0], b.shape[0]):
            raise DimensionMismatch("X must be n^2 x n^2")
        if not nm.is_hermitian(x, KRAUS_TOL):
            raise NotPSD("X is not Hermitian")
        if not _check_psd(x, KRAUS_TOL):
            raise NotPSD("X is not PSD")
        s = np.einsum("ij,ijab->ab", x, completeness_terms(b))
        n = b.shape[1]
        if not np.allclose(s, np.eye(n), rtol=0, atol=KRAUS_TOL):
            raise InvalidKraus("X violates sum X_ij B_i^H B_j = I")
        object.__setattr__(self, "X", _frozen(nm.hermitize(x)))
        object.__setattr__(self, "basis", _frozen(b))

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho)
        return apply_coefficients(self.X, self.basis, rho)


def apply_coefficients(x: np.ndarray, basis: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Channel action ``sum_ij X_ji B_i rho B_j^H`` (no validity checks)."""
    left = basis @ rho
    return np.einsum("ji,iab,jcb->ac", x, left, basis.conj())


def superoperator_from_kraus(kraus: KrausSet, basis=None) -> Superoperator:
    basis = nm.default_operator_basis(kraus.n) if basis is None else _check_basis(basis)
    # orthonormal basis: a_ki = Tr(B_i^H K_k); otherwise solve the linear system
    bmat = nm.stack_vecs(basis).T
    a = np.array([np.linalg.lstsq(bmat, nm.vec(k), rcond=None)[0] for k in kraus.ops])
    x = a.conj().T @ a
    return Superoperator(x, basis)


def kraus_from_superoperator(x: Superoperator, drop_tol: float = 1e-10):
    """Kraus set ``K_k = sum_i sqrt(s_k) conj(V_ik) B_i`` from ``X = V S V^H``.

    Returns ``(KrausSet, s)`` with ``s`` descending; eigenvalues below
    ``drop_tol`` are dropped.
    """
    w, v = np.linalg.eigh(x.X)
    if w.min() < -KRAUS_TOL:
        raise NotPSD("X is not PSD")
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    keep = w > drop_tol
    s = w[keep]
    ops = [np.sqrt(sk) * np.tensordot(v[:, k].conj(), x.basis, axes=1) for k, sk in zip(np.flatnonzero(keep), s)]
    return KrausSet(tuple(ops)), s


# ------------------------------------------------------------- ensembles


@dataclass(frozen=True, eq=False)
class Configuration:
    povm: PovmSet
    rho: DensityMatrix
    label: str

    def __post_init__(self):
        if self.povm.n != self.rho.n:
            raise DimensionMismatch(f"configuration {self.label!r}: POVM and state dimensions differ")


@dataclass(frozen=True, eq=False)
class ConfigurationEnsemble:
    configs: tuple

    def __post_init__(self):
        cfgs = tuple(self.configs)
        if not cfgs:
            raise DimensionMismatch("ensemble has no configurations")
        n = cfgs[0].rho.n
        if any(c.rho.n != n for c in cfgs):
            raise DimensionMismatch("configurations differ in dimension")
        labels = [c.label for c in cfgs]
        if len(set(labels)) != len(labels):
            raise DimensionMismatch("configuration labels must be unique")
        object.__setattr__(self, "configs", cfgs)

    @property
    def n(self) -> int:
        return self.configs[0].rho.n

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    def __getitem__(self, i):
        return self.configs[i]

    @property
    def labels(self) -> tuple:
        return tuple(c.label for c in self.configs)

    def outcome_counts(self) -> tuple:
        return tuple(len(c.povm) for c in self.configs)


@dataclass(frozen=True, eq=False)
class CountData:
    counts: tuple

    def __post_init__(self):
        cs = []
        for c in self.counts:
            a = np.asarray(c)
            if a.ndim != 1 or np.any(a < 0) or not np.all(np.equal(np.mod(a, 1), 0)):
                raise DimensionMismatch("counts must be non-negative integer vectors")
            a = a.astype(np.int64)
            a.setflags(write=False)
            cs.append(a)
        object.__setattr__(self, "counts", tuple(cs))

    @property
    def trials(self) -> np.ndarray:
        return np.array([int(c.sum()) for c in self.counts])

    @property
    def total(self) -> int:
        return int(self.trials.sum())

    def frequencies(self) -> list:
        return [c / c.sum() if c.sum() > 0 else np.zeros(len(c)) for c in self.counts]

    def check_shape(self, shape: Sequence[int]) -> None:
        if len(shape) != len(self.counts) or any(len(c) != k for c, k in zip(self.counts, shape)):
            raise DimensionMismatch("count data shape does not match the problem's ensemble")


def build_R_matrices(ensemble: ConfigurationEnsemble, basis=None, convention: Convention = "consistent") -> list:
    """Per-configuration arrays of R matrices, shape (n_out, n^2, n^2).

    ``consistent``: ``R_ij = Tr(B_i rho B_j^H O)``, the ordering under which
    ``p = Tr(X R)`` sums to one whenever ``sum X_ij B_i^H B_j = I``.
    ``literal``: ``R_ij = Tr(B_j rho B_i^H O)``; it agrees with the
    consistent ordering only for real symmetric X and is kept for
    reproducing reference numbers computed that way.
    """
    if convention not in ("consistent", "literal"):
        raise ValueError(f"unknown convention {convention!r}")
    basis = nm.default_operator_basis(ensemble.n) if basis is None else _check_basis(basis)
    if basis.shape[1] != ensemble.n:
        raise BadBasis("basis dimension differs from the ensemble dimension")
    out = []
    for cfg in ensemble:
        left = basis @ cfg.rho.matrix
        rs = []
        for o in cfg.povm.elements:
            right = nm.dag(basis) @ o
            t = np.einsum("iab,jba->ij", left, right)
            rs.append(t if convention == "consistent" else t.T)
        out.append(np.array(rs))
    return out


# -------------------------------------------------------------- problems


class EstimationProblem:
    """Common interface of the five parameterizations."""

    tag: str = ""

    @property
    def n_configs(self) -> int:
        raise NotImplementedError

    @property
    def labels(self) -> tuple:
        raise NotImplementedError

    def outcome_shape(self) -> tuple:
        raise NotImplementedError

    def probabilities(self, point) -> list:
        raise NotImplementedError


def _finish_probs(raw: list) -> list:
    out = []
    for g, p in enumerate(raw):
        p = np.asarray(p, dtype=float)
        if np.any(p < -NEG_CLAMP):
            raise InfeasiblePoint(f"configuration {g}: negative probability {p.min():.3e}")
        out.append(np.clip(p, 0, None))
    return out


class LinearProblem(EstimationProblem):
    """Problems whose probabilities are linear in real coordinates ``x``."""

    cone: str = "psd"

    def __init__(self, ensemble: ConfigurationEnsemble):
        self.ensemble = ensemble

    @property
    def n_configs(self) -> int:
        return len(self.ensemble)

    @property
    def labels(self) -> tuple:
        return self.ensemble.labels

    def outcome_shape(self) -> tuple:
        return self.ensemble.outcome_counts()

    # subclasses fill these
    @cached_property
    def rows(self) -> list:
        raise NotImplementedError

    @cached_property
    def eq_system(self):
        raise NotImplementedError

    @property
    def cone_basis(self) -> Optional[np.ndarray]:
        return None

    @property
    def dim(self) -> int:
        return self.rows[0].shape[1]

    def to_coords(self, point) -> np.ndarray:
        raise NotImplementedError

    def from_coords(self, x):
        raise NotImplementedError

    def interior_coords(self) -> np.ndarray:
        raise NotImplementedError

    def probabilities_coords(self, x) -> list:
        return [r @ x for r in self.rows]

    def probabilities(self, point) -> list:
        x = self.to_coords(point)
        return _finish_probs(self.probabilities_coords(x))


class StateProblem(LinearProblem):
    """``p = Tr(O rho)``; coordinates of rho in an orthonormal Hermitian basis."""

    tag = "state"
    cone = "psd"

    @cached_property
    def basis(self) -> np.ndarray:
        return nm.hermitian_basis(self.ensemble.n)

    @property
    def cone_basis(self):
        return self.basis

    @cached_property
    def rows(self) -> list:
        f = self.basis
        return [np.einsum("aij,kji->ak", cfg.povm.stacked(), f).real for cfg in self.ensemble]

    @cached_property
    def eq_system(self):
        f = self.basis
        return np.trace(f, axis1=1, axis2=2).real[None, :], np.array([1.0])

    def to_coords(self, point) -> np.ndarray:
        return nm.herm_coords(as_density(point).matrix, self.basis)

    def from_coords(self, x) -> np.ndarray:
        return nm.herm_from_coords(x, self.basis)

    def interior_coords(self) -> np.ndarray:
        return nm.herm_coords(np.eye(self.ensemble.n) / self.ensemble.n, self.basis)


def _check_simplex(q, k: int) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size != k:
        raise DimensionMismatch(f"expected {k} weights, got {q.size}")
    if np.any(q < -POINT_TOL) or abs(q.sum() - 1) > POINT_TOL:
        raise InfeasiblePoint("weights are not on the simplex within 1e-8")
    return q


class _SimplexProblem(LinearProblem):
    cone = "nonneg"

    @cached_property
    def eq_system(self):
        return np.ones((1, self.dim)), np.array([1.0])

    def to_coords(self, point) -> np.ndarray:
        return _check_simplex(point, self.dim)

    def from_coords(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)

    def interior_coords(self) -> np.ndarray:
        return np.full(self.dim, 1.0 / self.dim)


class StateDistributionProblem(_SimplexProblem):
    """Mixture of known input states: ``p = sum_i f_i Tr(O rho_i)``."""

    tag = "state-distribution"

    def __init__(self, ensemble: ConfigurationEnsemble, inputs: Sequence[DensityMatrix]):
        super().__init__(ensemble)
        self.inputs = tuple(inputs)
        if not self.inputs or any(r.n != ensemble.n for r in self.inputs):
            raise DimensionMismatch("input states must match the ensemble dimension")

    @cached_property
    def rows(self) -> list:
        rhos = np.array([r.matrix for r in self.inputs])
        return [np.einsum("aij,kji->ak", cfg.povm.stacked(), rhos).real for cfg in self.ensemble]


class OsrDistributionProblem(_SimplexProblem):
    """Mixture of known trace-preserving components acting on each input.

    ``p = sum_k q_k Tr(M Q_k(rho_gamma))``.
    """

    tag = "osr-distribution"

    def __init__(self, ensemble: ConfigurationEnsemble, components: Sequence[KrausSet]):
        super().__init__(ensemble)
        self.components = tuple(components)
        if not self.components or any(c.n != ensemble.n for c in self.components):
            raise DimensionMismatch("components must match the ensemble dimension")

    @cached_property
    def rows(self) -> list:
        out = []
        for cfg in self.ensemble:
            outs = np.array([c.apply(cfg.rho) for c in self.components])
            out.append(np.einsum("aij,kji->ak", cfg.povm.stacked(), outs).real)
        return out


class SuperoperatorProblem(LinearProblem):
    """``p = Tr(X R)`` with X expanded in an orthonormal Hermitian basis of n^2 x n^2 matrices."""

    tag = "superoperator"
    cone = "psd"

    def __init__(self, ensemble: ConfigurationEnsemble, basis=None, convention: Convention = "consistent"):
        super().__init__(ensemble)
        self.basis = nm.default_operator_basis(ensemble.n) if basis is None else _check_basis(basis)
        if convention not in ("consistent", "literal"):
            raise ValueError(f"unknown convention {convention!r}")
        self.convention = convention

    @cached_property
    def coord_basis(self) -> np.ndarray:
        return nm.hermitian_basis(self.ensemble.n ** 2)

    @property
    def cone_basis(self):
        return self.coord_basis

    @cached_property
    def R(self) -> list:
        return build_R_matrices(self.ensemble, self.basis, self.convention)

    @cached_property
    def rows(self) -> list:
        f = self.coord_basis
        return [np.einsum("aij,kji->ak", r, f).real for r in self.R]

    @cached_property
    def eq_system(self):
        n = self.ensemble.n
        s = completeness_terms(self.basis)
        sk = np.einsum("kij,ijab->kab", self.coord_basis, s)
        h = nm.hermitian_basis(n)
        a = np.einsum("mab,kba->mk", h, sk).real
        b = np.trace(h, axis1=1, axis2=2).real
        return a, b

    def to_coords(self, point) -> np.ndarray:
        x = point.X if isinstance(point, Superoperator) else nm.as_cmat(point)
        if not nm.is_hermitian(x, POINT_TOL) or not _check_psd(x, POINT_TOL):
            raise InfeasiblePoint("X is not PSD within 1e-8")
        c = nm.herm_coords(x, self.coord_basis)
        a, b = self.eq_system
        if np.max(np.abs(a @ c - b)) > POINT_TOL:
            raise InfeasiblePoint("X violates the completeness constraint")
        return c

    def from_coords(self, x) -> np.ndarray:
        return nm.herm_from_coords(x, self.coord_basis)

    def interior_coords(self) -> np.ndarray:
        m = self.ensemble.n ** 2
        # X = I/n satisfies completeness for any orthonormal basis
        return nm.herm_coords(np.eye(m) / self.ensemble.n, self.coord_basis)


# ---------------------------------------------------------- Hamiltonians

Segments = Callable[[np.ndarray], Sequence[tuple]]


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """Piecewise-constant Hamiltonian ``theta -> [(duration, H), ...]``.

    The last segment may have infinite duration. ``lower``/``upper`` bound a
    box; when ``radius`` is set the parameter set is the ball around
    ``center`` intersected with the box.
    """

    segments: Segments
    lower: np.ndarray
    upper: np.ndarray
    times: tuple
    initial_states: tuple
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi < lo):
            raise DimensionMismatch("bad parameter bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "initial_states", tuple(self.initial_states))

    @classmethod
    def constant(cls, h: Callable[[np.ndarray], np.ndarray], **kw) -> "HamiltonianModel":
        return cls(segments=lambda th: [(math.inf, h(th))], **kw)

    @property
    def n_params(self) -> int:
        return self.lower.size

    def contains(self, theta, tol: float = POINT_TOL) -> bool:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if th.shape != self.lower.shape:
            return False
        if np.any(th < self.lower - tol) or np.any(th > self.upper + tol):
            return False
        if self.radius is not None:
            return float(np.linalg.norm(th - self.center)) <= self.radius + tol
        return True

    def propagator(self, theta, t: float) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        segs = self.segments(th)
        n = np.asarray(segs[0][1]).shape[0]
        u = np.eye(n, dtype=complex)
        left = t
        for dur, h in segs:
            if left <= 0:
                break
            step = min(dur, left)
            u = nm.herm_expm(h, step) @ u
            left -= step
        return u


class HamiltonianProblem(EstimationProblem):
    """``p_{alpha beta tau}(theta) = Tr(M_alpha U(t_tau) rho_beta U^H)``.

    Configurations are ordered input-major: ``gamma = beta * n_times + tau``.
    """

    tag = "hamiltonian"

    def __init__(self, model: HamiltonianModel, povm: PovmSet, input_labels: Sequence[str] = ()):
        self.model = model
        self.povm = povm
        names = tuple(input_labels) if input_labels else tuple(f"rho{b}" for b in range(len(model.initial_states)))
        self.input_labels = names
        self._labels = tuple(f"{nb},t={t:.10g}" for nb in names for t in model.times)

    @property
    def n_configs(self) -> int:
        return len(self.model.initial_states) * len(self.model.times)

    @property
    def labels(self) -> tuple:
        return self._labels

    def outcome_shape(self) -> tuple:
        return (len(self.povm),) * self.n_configs

    def raw_probabilities(self, theta) -> np.ndarray:
        """Probabilities without feasibility checks, shape (n_cfg, n_out)."""
        m = self.povm.stacked()
        out = np.empty((self.n_configs, len(self.povm)))
        us = [self.model.propagator(theta, t) for t in self.model.times]
        g = 0
        for rho in self.model.initial_states:
            r = rho.matrix
            for u in us:
                s = u @ r @ nm.dag(u)
                out[g] = np.einsum("aij,ji->a", m, s).real
                g += 1
        return out

    def probabilities(self, point) -> list:
        if not self.model.contains(point):
            raise InfeasiblePoint("theta lies outside the parameter set")
        return _finish_probs(list(self.raw_probabilities(point)))


def outcome_probs(problem: EstimationProblem, point) -> list:
    """Per-configuration outcome probabilities at a feasible point."""
    return problem.probabilities(point)
