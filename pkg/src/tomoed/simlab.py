"""Monte Carlo data, average-likelihood curves and adaptive-control demos.

Random numbers come from a counter-based Philox stream keyed by
``(seed, replicate)``, so every replicate is reproducible on its own.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.ndimage import maximum_filter

from . import numerics as nm
from .errors import InfeasiblePoint, InfeasibleTruth, InputError
from .qmodel import (
    CountData,
    DensityMatrix,
    EstimationProblem,
    HamiltonianModel,
    HamiltonianProblem,
    PovmSet,
)

# ---------------------------------------------------------------- sampling


class RngStream:
    """Philox generator keyed by ``(seed, replicate)``."""

    def __init__(self, seed: int = 0, replicate: int = 0):
        if seed < 0 or replicate < 0:
            raise InputError("seed and replicate must be non-negative")
        self.seed = int(seed)
        self.replicate = int(replicate)
        key = np.array([self.seed, self.replicate], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def spawn(self, replicate: int) -> "RngStream":
        return RngStream(self.seed, replicate)

    def binomial(self, n: int, p: float) -> int:
        return int(self.generator.binomial(n, p))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, replicate={self.replicate})"


def multinomial(n: int, p: np.ndarray, rng: RngStream) -> np.ndarray:
    """Multinomial draw by sequential conditional binomials."""
    p = np.clip(np.asarray(p, dtype=float), 0, None)
    out = np.zeros(p.size, dtype=np.int64)
    left = int(n)
    mass = float(p.sum())
    for i in range(p.size - 1):
        if left == 0:
            break
        q = 0.0 if mass <= 0 else min(1.0, p[i] / mass)
        k = rng.binomial(left, q)
        out[i] = k
        left -= k
        mass -= p[i]
    out[-1] += left
    return out


def sample_counts(problem: EstimationProblem, truth, allocation, rng: RngStream) -> CountData:
    """Counts ``n_gamma ~ Multinomial(l_gamma, p_gamma(truth))``."""
    l = np.asarray(allocation)
    if l.shape != (problem.n_configs,) or np.any(l < 0) or not np.all(np.mod(l, 1) == 0):
        raise InputError("allocation must hold one non-negative integer per configuration")
    try:
        ps = problem.probabilities(truth)
    except InfeasiblePoint as exc:
        raise InfeasibleTruth(str(exc)) from exc
    return CountData(tuple(multinomial(int(n), p, rng) for n, p in zip(l, ps)))


def expected_counts(problem: EstimationProblem, truth, allocation) -> list:
    """``E n_alpha_gamma = l_gamma p_alpha_gamma(truth)`` (real valued)."""
    ps = problem.probabilities(truth)
    return [float(n) * p for n, p in zip(allocation, ps)]


# ------------------------------------------------------ average likelihood


def average_likelihood(problem: EstimationProblem, truth, allocation, grid, normalized: bool = False) -> np.ndarray:
    """``E L(theta) = -sum l_gamma p_true log p(theta)`` on each grid point.

    Points where a model probability vanishes while the true one does not
    are returned as ``+inf``. ``normalized`` divides by the finite minimum.
    """
    ptrue = problem.probabilities(truth)
    l = np.asarray(allocation, dtype=float)
    out = np.empty(len(grid))
    for i, th in enumerate(grid):
        ps = problem.probabilities(th)
        v = 0.0
        for lg, pt, p in zip(l, ptrue, ps):
            m = pt > 0
            if lg == 0 or not np.any(m):
                continue
            if np.any(p[m] <= 0):
                v = np.inf
                break
            v -= lg * float(pt[m] @ np.log(p[m]))
        out[i] = v
    if normalized:
        fin = out[np.isfinite(out)]
        if fin.size:
            out = out / fin.min()
    return out


def second_differences(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v[2:] - 2 * v[1:-1] + v[:-2]


def count_local_minima(values) -> int:
    """Interior strict local minima of a sampled curve."""
    v = np.asarray(values, dtype=float)
    return int(np.sum((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])))


# ------------------------------------------------------------- pulse gates

# controls are (e1z, e1x, e2z, e2x, ec)


@dataclass(frozen=True)
class PulseTable:
    segments: tuple

    def __post_init__(self):
        segs = []
        for ctrl, dt in self.segments:
            ctrl = tuple(float(c) for c in ctrl)
            if len(ctrl) != 5:
                raise InputError("each pulse row needs five control values")
            if not dt > 0:
                raise InputError("pulse durations must be positive")
            segs.append((ctrl, float(dt)))
        object.__setattr__(self, "segments", tuple(segs))

    @property
    def duration(self) -> float:
        return float(sum(dt for _, dt in self.segments))


def _kron(a, b):
    return np.kron(a, b)


I2, X, Y, Z = nm.PAULI_I, nm.PAULI_X, nm.PAULI_Y, nm.PAULI_Z
_XX_YY_ZZ = _kron(X, X) + _kron(Y, Y) + _kron(Z, Z)

U_BELL = np.array([[1, 0, 1, 0], [0, 1, 0, 1], [0, 1, 0, -1], [1, 0, -1, 0]], dtype=complex) / np.sqrt(2)
OMEGA_TRUE = (1.0, 0.01, 0.01)


def two_qubit_hamiltonian(ctrl, omega) -> np.ndarray:
    """Local drives on both qubits plus an isotropic exchange coupling."""
    e1z, e1x, e2z, e2x, ec = ctrl
    w0, w1, wc = omega
    h1 = 0.5 * (e1z * w0 * _kron(Z, I2) + e1x * w1 * _kron(X, I2))
    h2 = 0.5 * (e2z * w0 * _kron(I2, Z) + e2x * w1 * _kron(I2, X))
    return h1 + h2 + ec * wc * _XX_YY_ZZ


def bell_pulse_table(omega_hat=OMEGA_TRUE, omega_had: float = 1.0) -> PulseTable:
    """Six-pulse sequence that yields ``e^{-i pi/4} U_bell`` when ``omega_hat`` is exact."""
    w0, w1, wc = omega_hat
    r2 = math.sqrt(2)
    rows = (
        ((0, 0, 0, 1, 0), math.pi / w1),
        ((0, 0, 0, 0, 1), math.pi / (8 * wc)),
        ((0, 0, 0, 1, 0), math.pi / (2 * w1)),
        ((0, 1, 0, 0, 0), 3 * math.pi / (2 * w1)),
        ((0, 0, 0, 0, 1), math.pi / (8 * wc)),
        ((omega_had / (w0 * r2), omega_had / (w1 * r2), 0, 0, 0), math.pi / omega_had),
    )
    return PulseTable(rows)


def pulse_segments(table: PulseTable, omega) -> list:
    return [(dt, two_qubit_hamiltonian(ctrl, omega)) for ctrl, dt in table.segments]


def pulse_gate(table: PulseTable, omega=OMEGA_TRUE) -> np.ndarray:
    """Ordered product of segment propagators (later pulses act on the left)."""
    u = np.eye(4, dtype=complex)
    for dt, h in pulse_segments(table, omega):
        u = nm.herm_expm(h, dt) @ u
    return u


def phase_aligned_error(u, target):
    """``(phi, ||u - e^{i phi} target||_F)`` at the error-minimizing phase."""
    phi = float(np.angle(np.trace(np.asarray(target).conj().T @ np.asarray(u))))
    return phi, float(np.linalg.norm(u - np.exp(1j * phi) * target))


def bell_problem(omega_hat=OMEGA_TRUE, n_sa: int = 1, omega_had: float = 1.0, omega_known=None, bounds=(0.001, 0.05)) -> HamiltonianProblem:
    """One-parameter (omega_1) model driven by the pulse table built from ``omega_hat``.

    The input is |00>, the first qubit is measured in the Z basis at
    ``t_f`` (``n_sa = 1``) or at ``t_f / 2`` and ``t_f`` (``n_sa = 2``).
    """
    if n_sa not in (1, 2):
        raise InputError("n_sa must be 1 or 2")
    table = bell_pulse_table(omega_hat, omega_had)
    w0, _, wc = omega_hat if omega_known is None else omega_known
    tf = table.duration
    times = (tf,) if n_sa == 1 else (tf / 2, tf)
    p0 = np.zeros((4, 4), dtype=complex)
    p0[:2, :2] = np.eye(2)
    povm = PovmSet((p0, np.eye(4) - p0), ("0", "1"))
    ket = np.zeros(4, dtype=complex)
    ket[0] = 1
    model = HamiltonianModel(
        segments=lambda th: pulse_segments(table, (w0, th[0], wc)),
        lower=[bounds[0]],
        upper=[bounds[1]],
        times=times,
        initial_states=(DensityMatrix.pure(ket),),
    )
    return HamiltonianProblem(model, povm, ("|00>",))


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    """Minimize a unimodal function on [lo, hi]; returns (x, f(x))."""
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    x = c if fc <= fd else d
    return x, min(fc, fd)


# ---------------------------------------------------------- adaptive loops


@dataclass
class AdaptiveTrace:
    records: list = field(default_factory=list)
    converged: bool = False

    @property
    def estimates(self) -> list:
        return [r["estimate"] for r in self.records]


def adaptive_loop(step: Callable[[object, int], dict], start, rounds: int, converged: Optional[Callable[[list], bool]] = None) -> AdaptiveTrace:
    """Generic indirect-adaptive iteration.

    ``step(estimate, k)`` designs controls from the current estimate,
    gathers (simulated) data and returns a record with key ``estimate``
    holding the next estimate. No convergence is assumed; ``converged``
    only labels the finished trace.
    """
    if rounds < 1:
        raise InputError("rounds must be at least 1")
    trace = AdaptiveTrace()
    est = start
    for k in range(rounds):
        rec = step(est, k)
        rec.setdefault("round", k)
        trace.records.append(rec)
        est = rec["estimate"]
    trace.converged = bool(converged(trace.records)) if converged else False
    return trace


def bell_adaptive(omega1_start: float, omega_true=OMEGA_TRUE, rounds: int = 30, n_sa: int = 1, window: float = 0.25, l_expt: float = 1.0, tol: float = 1e-6) -> AdaptiveTrace:
    """Hill-climb on the expected likelihood to re-estimate omega_1 each round.

    Round k builds the pulse table from the current estimate, evaluates the
    expected likelihood of the measurement records for candidate omega_1 in
    ``[w(1 - window), w(1 + window)]`` and moves to its golden-section
    minimizer. Each record carries the realized gate error against
    ``e^{-i pi/4} U_bell``.
    """
    w0, w1_true, wc = omega_true

    def step(w1, k):
        prob = bell_problem((w0, w1, wc), n_sa=n_sa, bounds=(w1 * (1 - window), w1 * (1 + window)))
        ptrue = prob.raw_probabilities([w1_true])

        def el(x):
            p = prob.raw_probabilities([x])
            with np.errstate(divide="ignore"):
                lp = np.where(ptrue > 0, np.log(np.clip(p, 1e-300, None)), 0.0)
            return -l_expt * float(np.sum(ptrue * lp))

        nxt, val = golden_section(el, w1 * (1 - window), w1 * (1 + window))
        u = pulse_gate(bell_pulse_table((w0, w1, wc)), omega_true)
        _, err = phase_aligned_error(u, np.exp(-1j * math.pi / 4) * U_BELL)
        return {"control_omega1": w1, "estimate": float(nxt), "expected_L": val, "gate_error": err}

    def conv(recs):
        return abs(recs[-1]["estimate"] - w1_true) <= tol * max(1.0, abs(w1_true))

    return adaptive_loop(step, float(omega1_start), rounds, conv)


def hadamard_adaptive(theta_true: float = 1.0, theta_start: float = 0.9, rounds: int = 1, l_expt: int = 100000, rng: Optional[RngStream] = None, grid_points: int = 201) -> AdaptiveTrace:
    """Set ``eps = 1/theta_hat``, design sample times, simulate, re-estimate.

    The realized gate after each update is ``exp(-i theta_true eps_new H_had pi/2)``
    and its worst-case fidelity against ``U_had`` is recorded.
    """
    from . import oed
    from .estimator import mle_hamiltonian
    from .fidelity import worst_case_fidelity
    from .fisher import fisher_blocks
    from .photonics import U_HAD, hadamard_hamiltonian_problem

    rng = rng or RngStream(0)
    hbase = (nm.PAULI_X + nm.PAULI_Z) / np.sqrt(2)

    def step(th, k):
        eps = 1.0 / th
        prob = hadamard_hamiltonian_problem(eps=eps, bounds=(0.5 * th, 1.5 * th))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = fisher_blocks(prob, [th])
        d = oed.solve_design(model, certify=False)
        l = oed._round_half_away(l_expt * d.lam)
        keep = np.flatnonzero(l > 0)
        sub = hadamard_hamiltonian_problem(eps=eps, times=np.asarray(prob.model.times)[keep], bounds=(0.5 * th, 1.5 * th))
        data = sample_counts(sub, [theta_true], l[keep], rng)
        rep = mle_hamiltonian(sub, data, grid_points=grid_points)
        th_new = float(rep.estimate[0])
        u_act = nm.herm_expm(theta_true * hbase / th_new, math.pi / 2)
        fid = worst_case_fidelity(U_HAD, u_act).value
        return {
            "control_eps": eps,
            "times": [float(t) for t in np.asarray(prob.model.times)[keep]],
            "allocation": [int(x) for x in l[keep]],
            "estimate": th_new,
            "V": d.V,
            "fidelity": fid,
        }

    return adaptive_loop(step, float(theta_start), rounds)


def expected_fidelity(v_rel: float) -> float:
    """``1 - (pi/2)^2 E(delta^2)`` for relative error variance ``E(delta^2)``."""
    return 1 - (math.pi / 2) ** 2 * v_rel


# ------------------------------------------------------------- landscapes


@dataclass(frozen=True)
class LandscapeResult:
    eps_z: np.ndarray
    eps_x: np.ndarray
    values: np.ndarray
    max_value: float
    argmax: tuple
    local_maxima: int


LANDSCAPE_PARAMS = {"w_qz": 1.0, "w_qx": 0.01, "w_ez": 1.0, "w_qe": 0.005}


def landscape_probability(ez: float, ex: float, w_qz=1.0, w_qx=0.01, w_ez=1.0, w_qe=0.005, t_f=None) -> float:
    """Probability of finding the driven qubit in |0> after ``t_f`` (default pi/w_qx)."""
    t_f = math.pi / w_qx if t_f is None else t_f
    hq = (ez - 1) * w_qz * Z / 2 + ex * w_qx * X / 2
    h = _kron(hq, I2) + _kron(I2, w_ez * Z / 2) + w_qe * _XX_YY_ZZ
    rho0 = _kron(np.diag([0.0, 1.0]), I2 / 2)
    m = _kron(np.diag([1.0, 0.0]), I2)
    u = nm.herm_expm(h, t_f)
    return float(np.trace(m @ u @ rho0 @ u.conj().T).real)


def landscape_grid():
    """The stated scan ranges for (eps_z, eps_x)."""
    ez = np.round(np.arange(0.96, 1.04 + 1e-9, 0.002), 10)
    ex = np.round(np.arange(0.1, 5.2 + 1e-9, 0.02), 10)
    return ez, ex


def landscape_scan(eps_z=None, eps_x=None, **params) -> LandscapeResult:
    """Evaluate the transition probability on a control grid.

    Local maxima are grid points equal to the maximum of their 3x3
    neighbourhood (edges use nearest padding).
    """
    if eps_z is None or eps_x is None:
        dz, dx = landscape_grid()
        eps_z = dz if eps_z is None else eps_z
        eps_x = dx if eps_x is None else eps_x
    ez = np.asarray(eps_z, dtype=float)
    ex = np.asarray(eps_x, dtype=float)
    if ez.size == 0 or ex.size == 0:
        raise InputError("control grid is empty")
    p = {**LANDSCAPE_PARAMS, **params}
    vals = np.array([[landscape_probability(z, x, **p) for x in ex] for z in ez])
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    lm = int(np.sum(vals == maximum_filter(vals, size=3, mode="nearest")))
    return LandscapeResult(ez, ex, vals, float(vals[i, j]), (float(ez[i]), float(ex[j])), lm)
