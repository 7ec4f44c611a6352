"""Builders for the worked example systems.

Polarization analysis with wave plates and photon counters (one and two
arms), a bit-flip plus depolarizing channel probed by a single input state,
a 36-configuration process-tomography setup, and the single-qubit Hadamard
Hamiltonian. Angles are in degrees at every interface.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import numerics as nm
from .errors import InputError
from .qmodel import (
    Configuration,
    ConfigurationEnsemble,
    DensityMatrix,
    HamiltonianModel,
    HamiltonianProblem,
    KrausSet,
    NoiseMixer,
    OsrDistributionProblem,
    PovmSet,
    StateProblem,
    SuperoperatorProblem,
    apply_noise,
    computational_povm,
    tensor_povm,
)

RHO_PURE = DensityMatrix(np.full((2, 2), 0.5))
RHO_MIXED = DensityMatrix(np.array([[0.6, -0.2j], [0.2j, 0.4]]))

ONE_ARM_OUTCOMES = ("10", "01", "00", "11")
TWO_ARM_PATTERNS = ("0101", "0110", "1001", "1010")


@dataclass(frozen=True)
class WavePlateSetting:
    h: float
    q: float
    h2: Optional[float] = None
    q2: Optional[float] = None

    def __post_init__(self):
        vals = [self.h, self.q] + [v for v in (self.h2, self.q2) if v is not None]
        if not all(np.isfinite(vals)):
            raise InputError("wave-plate angles must be finite")

    @property
    def label(self) -> str:
        s = f"h={self.h:g},q={self.q:g}"
        if self.h2 is not None:
            s += f",h2={self.h2:g},q2={self.q2:g}"
        return s


@dataclass(frozen=True)
class DetectorNoise:
    """Per-detector efficiency ``eta`` and dark-count probability ``delta``."""

    eta: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if not (0 <= self.eta <= 1 and 0 <= self.delta <= 1):
            raise InputError("eta and delta must lie in [0, 1]")

    @property
    def is_ideal(self) -> bool:
        return self.eta == 1 and self.delta == 0

    def single(self) -> np.ndarray:
        """``nu[fired, photon]`` for one detector."""
        n01 = (1 - self.eta) * (1 - self.delta)
        return np.array([[1 - self.delta, n01], [self.delta, 1 - n01]])

    def mixer(self) -> NoiseMixer:
        """Mixer from the clean pair (10, 01) to outcomes (10, 01, 00, 11)."""
        v = self.single()
        # photon on detector 1 (clean 10) or detector 2 (clean 01)
        rows = []
        for a, b in ((1, 0), (0, 1), (0, 0), (1, 1)):
            rows.append([v[a, 1] * v[b, 0], v[a, 0] * v[b, 1]])
        return NoiseMixer(np.array(rows), ONE_ARM_OUTCOMES)


def _rad(x: float) -> float:
    return np.deg2rad(float(x))


def one_arm_states(s: WavePlateSetting):
    h, q = _rad(s.h), _rad(s.q)
    a, b = np.sin(2 * h), np.cos(2 * h)
    c, d = np.sin(2 * (h - q)), np.cos(2 * (h - q))
    psi1 = np.array([a + 1j * c, b - 1j * d]) / np.sqrt(2)
    psi2 = np.array([b + 1j * d, -a + 1j * c]) / np.sqrt(2)
    return psi1, psi2


def one_arm_projectors(s: WavePlateSetting):
    """Rank-one projectors ``(M10, M01)`` onto the two detector ports."""
    p1, p2 = one_arm_states(s)
    return np.outer(p1, p1.conj()), np.outer(p2, p2.conj())


def one_arm_povm(s: WavePlateSetting) -> PovmSet:
    m10, m01 = one_arm_projectors(s)
    return PovmSet((m10, m01), ONE_ARM_OUTCOMES[:2])


def one_arm_noisy_povm(s: WavePlateSetting, noise: DetectorNoise) -> PovmSet:
    """Four-outcome POVM over detector patterns (10, 01, 00, 11)."""
    return apply_noise(one_arm_povm(s), noise.mixer())


def _arm_povm(s: WavePlateSetting, noise: Optional[DetectorNoise]) -> PovmSet:
    if noise is None or noise.is_ideal:
        return one_arm_povm(s)
    return one_arm_noisy_povm(s, noise)


def angle_grid(step: float = 5.0, stop: float = 45.0) -> list:
    """Row-major (h outer, q inner) grid of settings with both angles in 0..stop."""
    vals = np.arange(0, stop + 1e-9, step)
    return [WavePlateSetting(float(h), float(q)) for h in vals for q in vals]


def build_one_arm_ensemble(settings: Sequence[WavePlateSetting], noise: Optional[DetectorNoise] = None, rho: DensityMatrix = RHO_PURE) -> ConfigurationEnsemble:
    """One configuration per setting. Ideal detectors give two outcomes, noisy ones four."""
    if not settings:
        raise InputError("settings grid is empty")
    return ConfigurationEnsemble(tuple(Configuration(_arm_povm(s, noise), rho, s.label) for s in settings))


def two_arm_povm(s: WavePlateSetting, noise: Optional[DetectorNoise] = None) -> PovmSet:
    """Joint POVM for a photon pair.

    Ideal detectors: the four one-photon-per-arm patterns, ordered
    0101, 0110, 1001, 1010. With noise: all 16 tensor-product outcomes of
    the per-arm noisy POVMs.
    """
    a = WavePlateSetting(s.h, s.q)
    b = WavePlateSetting(s.h2, s.q2)
    if noise is None or noise.is_ideal:
        pa, pb = one_arm_projectors(a), one_arm_projectors(b)
        name = {"10": 0, "01": 1}
        els = tuple(np.kron(pa[name[p[:2]]], pb[name[p[2:]]]) for p in TWO_ARM_PATTERNS)
        return PovmSet(els, TWO_ARM_PATTERNS)
    return tensor_povm(one_arm_noisy_povm(a, noise), one_arm_noisy_povm(b, noise))


def build_two_arm_ensemble(angles: Sequence[float], noise: Optional[DetectorNoise] = None, rho: DensityMatrix = None, rho2: DensityMatrix = None) -> ConfigurationEnsemble:
    """Row-major product over (h, q, h2, q2) drawn from ``angles``; input ``rho (x) rho2``."""
    if not angles:
        raise InputError("angle list is empty")
    rho = RHO_PURE if rho is None else rho
    rho2 = rho if rho2 is None else rho2
    joint = DensityMatrix(np.kron(rho.matrix, rho2.matrix))
    cfgs = []
    for h, q, h2, q2 in itertools.product(angles, repeat=4):
        s = WavePlateSetting(float(h), float(q), float(h2), float(q2))
        cfgs.append(Configuration(two_arm_povm(s, noise), joint, s.label))
    return ConfigurationEnsemble(tuple(cfgs))


def one_arm_problem(rho: DensityMatrix = RHO_PURE, noise: Optional[DetectorNoise] = None, step: float = 5.0):
    return StateProblem(build_one_arm_ensemble(angle_grid(step), noise, rho))


# --------------------------------------------------------- process examples

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
KET_PLUS_I = np.array([1, 1j], dtype=complex) / np.sqrt(2)

OSR_INPUTS = (("|0>", KET0), ("|1>", KET1), ("|+>", KET_PLUS), ("|-i>", KET_PLUS_I))


def build_osr_ensemble(angles: Sequence[float] = (0, 30, 45), noise: Optional[DetectorNoise] = DetectorNoise(0.75, 0.05), inputs=OSR_INPUTS) -> ConfigurationEnsemble:
    """Row-major over (h, q, input): 36 configurations with the defaults."""
    cfgs = []
    for h in angles:
        for q in angles:
            s = WavePlateSetting(float(h), float(q))
            povm = _arm_povm(s, noise)
            for name, ket in inputs:
                cfgs.append(Configuration(povm, DensityMatrix.pure(ket), f"{s.label},in={name}"))
    return ConfigurationEnsemble(tuple(cfgs))


def identity_superoperator_X(n: int = 2) -> np.ndarray:
    """X of the identity channel in the normalized Pauli basis: diag(n, 0, ...)."""
    x = np.zeros((n * n, n * n), dtype=complex)
    x[0, 0] = n
    return x


def osr_problem(convention: str = "consistent", noise: Optional[DetectorNoise] = DetectorNoise(0.75, 0.05)) -> SuperoperatorProblem:
    return SuperoperatorProblem(build_osr_ensemble(noise=noise), convention=convention)


def bitflip_depolarizing_components() -> tuple:
    """Identity, bit flip and full depolarizing channels as Kraus sets."""
    half = [nm.PAULI_I / 2, nm.PAULI_X / 2, nm.PAULI_Y / 2, nm.PAULI_Z / 2]
    return (KrausSet((nm.PAULI_I,)), KrausSet((nm.PAULI_X,)), KrausSet(tuple(half)))


CHANNEL_Q = np.array([0.6, 0.2, 0.2])


def channel_input(theta_deg: float) -> DensityMatrix:
    t = _rad(theta_deg)
    return DensityMatrix.pure(np.array([np.cos(t), np.sin(t)]))


def bitflip_depolarizing_problem(theta_deg: float, angles: Sequence[float] = (0, 15, 30, 45), noise: Optional[DetectorNoise] = None) -> OsrDistributionProblem:
    """Three-component mixture estimated from one input over a wave-plate grid."""
    rho = channel_input(theta_deg)
    cfgs = []
    for h in angles:
        for q in angles:
            s = WavePlateSetting(float(h), float(q))
            cfgs.append(Configuration(_arm_povm(s, noise), rho, s.label))
    return OsrDistributionProblem(ConfigurationEnsemble(tuple(cfgs)), bitflip_depolarizing_components())


# ------------------------------------------------------------- Hamiltonian

U_HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
HADAMARD_INPUTS = {"ket0": KET0, "had0": U_HAD @ KET0}


def hadamard_times(n: int = 100, stop: float = np.pi / 2) -> np.ndarray:
    """``t_k = stop * (k-1)/(n-1)`` for k = 1..n."""
    return stop * np.arange(n) / (n - 1)


def hadamard_hamiltonian_problem(eps: float = 1.0, inputs: Sequence[str] = ("ket0",), times=None, bounds=(0.5, 1.5)) -> HamiltonianProblem:
    """``H = theta * eps * (X + Z)/sqrt(2)`` sampled at times ``t_k``, measured in the Z basis."""
    if eps == 0:
        raise InputError("control eps must be nonzero")
    times = hadamard_times() if times is None else np.asarray(times, dtype=float)
    try:
        kets = [HADAMARD_INPUTS[i] for i in inputs]
    except KeyError as exc:
        raise InputError(f"unknown input {exc.args[0]!r}; choose from {sorted(HADAMARD_INPUTS)}") from None
    hbase = (nm.PAULI_X + nm.PAULI_Z) / np.sqrt(2)
    model = HamiltonianModel.constant(
        lambda th: th[0] * eps * hbase,
        lower=[bounds[0]],
        upper=[bounds[1]],
        times=tuple(times),
        initial_states=tuple(DensityMatrix.pure(k) for k in kets),
    )
    return HamiltonianProblem(model, computational_povm(2), tuple(inputs))
