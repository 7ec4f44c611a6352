"""Named example problems, each with its truth/surrogate point.

``build_example(name, **params)`` returns ``(problem, truth, surrogate, meta)``
where ``meta`` is a JSON-ready ``{"name": ..., "params": ...}`` record that
rebuilds the same problem.
"""

from __future__ import annotations

import numpy as np

from . import photonics as ph
from .errors import InputError, UnknownExample
from .simlab import OMEGA_TRUE, bell_problem

_RHOS = {"pure": ph.RHO_PURE, "mixed": ph.RHO_MIXED}


def _rho(name):
    try:
        return _RHOS[name]
    except KeyError:
        raise InputError(f"unknown state {name!r}; choose pure or mixed") from None


def _noise(noise):
    if noise is None:
        return None
    eta, delta = noise
    return ph.DetectorNoise(float(eta), float(delta))


def _one_arm(rho="pure", noise=None, step=5.0):
    r = _rho(rho)
    return ph.one_arm_problem(r, _noise(noise), step), r, r


def _two_arm(rho="pp", angles=(0, 20, 25, 45), noise=None):
    if len(rho) != 2 or any(c not in "pm" for c in rho):
        raise InputError("two-arm rho must be two letters from {p, m}, e.g. 'pm'")
    names = {"p": "pure", "m": "mixed"}
    r1, r2 = _rho(names[rho[0]]), _rho(names[rho[1]])
    ens = ph.build_two_arm_ensemble(list(angles), _noise(noise), r1, r2)
    from .qmodel import DensityMatrix, StateProblem

    joint = DensityMatrix(np.kron(r1.matrix, r2.matrix))
    return StateProblem(ens), joint, joint


def _osr(convention="consistent", noise=(0.75, 0.05)):
    x = ph.identity_superoperator_X()
    return ph.osr_problem(convention, _noise(noise)), x, x


def _channel(theta=25.0, q=tuple(ph.CHANNEL_Q), noise=None):
    q = np.asarray(q, dtype=float)
    return ph.bitflip_depolarizing_problem(float(theta), noise=_noise(noise)), q, q


def _hadamard(eps=1.0, input="ket0", theta=1.0, bounds=(0.5, 1.5)):
    inputs = (input,) if isinstance(input, str) else tuple(input)
    p = ph.hadamard_hamiltonian_problem(float(eps), inputs, bounds=tuple(bounds))
    t = np.array([float(theta)])
    return p, t, t


def _bell(omega1_hat=OMEGA_TRUE[1], n_sa=1):
    p = bell_problem((OMEGA_TRUE[0], float(omega1_hat), OMEGA_TRUE[2]), n_sa=int(n_sa))
    return p, np.array([OMEGA_TRUE[1]]), np.array([float(omega1_hat)])


EXAMPLES = {
    "one-arm": _one_arm,
    "two-arm": _two_arm,
    "osr": _osr,
    "channel": _channel,
    "hadamard": _hadamard,
    "bell": _bell,
}


def build_example(name, **params):
    if name not in EXAMPLES:
        raise UnknownExample(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
    try:
        problem, truth, surrogate = EXAMPLES[name](**params)
    except TypeError as exc:
        raise InputError(f"bad parameters for {name}: {exc}") from None
    clean = {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()}
    return problem, truth, surrogate, {"name": name, "params": clean}
