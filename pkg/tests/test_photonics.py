import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tomoed import photonics as ph
from tomoed.errors import InputError, NotIdentifiable
from tomoed.fisher import channel_det_R, crb_value, fisher_blocks

angles = st.floats(-90, 90, allow_nan=False)


def test_projectors_at_zero():
    psi1, _ = ph.one_arm_states(ph.WavePlateSetting(0, 0))
    assert np.allclose(psi1, [0, (1 - 1j) / np.sqrt(2)])
    m10, m01 = ph.one_arm_projectors(ph.WavePlateSetting(0, 0))
    assert np.allclose(m10 + m01, np.eye(2), atol=1e-15)


@given(angles, angles)
def test_projectors_complete_rank_one(h, q):
    m10, m01 = ph.one_arm_projectors(ph.WavePlateSetting(h, q))
    assert np.allclose(m10 + m01, np.eye(2), atol=1e-12)
    for m in (m10, m01):
        assert np.linalg.matrix_rank(m, tol=1e-10) == 1


def test_grid_has_100_settings():
    g = ph.angle_grid()
    assert len(g) == 100
    assert g[0].label == "h=0,q=0" and g[1].label == "h=0,q=5" and g[-1].label == "h=45,q=45"


def test_noisy_povm_ideal_limit():
    s = ph.WavePlateSetting(12, 33)
    p = ph.one_arm_noisy_povm(s, ph.DetectorNoise(1, 0))
    assert np.allclose(p.elements[2], 0) and np.allclose(p.elements[3], 0)
    clean = ph.one_arm_povm(s)
    assert np.allclose(p.elements[0], clean.elements[0], atol=1e-12)


def test_noisy_povm_realistic():
    p = ph.one_arm_noisy_povm(ph.WavePlateSetting(10, 40), ph.DetectorNoise(0.75, 0.05))
    assert np.allclose(sum(p.elements), np.eye(2), atol=1e-12)
    assert all(np.linalg.norm(e) > 1e-3 for e in p.elements)


def test_noisy_povm_blind_detector():
    p = ph.one_arm_noisy_povm(ph.WavePlateSetting(0, 0), ph.DetectorNoise(0, 0))
    assert np.allclose(p.elements[ph.ONE_ARM_OUTCOMES.index("00")], np.eye(2))


def test_detector_noise_range():
    with pytest.raises(InputError):
        ph.DetectorNoise(1.5, 0)


def test_ensemble_sizes():
    assert len(ph.build_one_arm_ensemble(ph.angle_grid())) == 100
    assert len(ph.build_one_arm_ensemble([ph.WavePlateSetting(0, 0)])) == 1
    assert len(ph.build_two_arm_ensemble([0, 20, 25, 45])) == 256
    with pytest.raises(InputError):
        ph.build_one_arm_ensemble([])


def test_two_arm_patterns_complete():
    # with one photon per arm the four patterns exhaust the outcomes
    p = ph.two_arm_povm(ph.WavePlateSetting(0, 20, 25, 45))
    assert p.labels == ph.TWO_ARM_PATTERNS
    assert np.allclose(sum(p.elements), np.eye(4), atol=1e-12)


def test_two_arm_noisy_is_product():
    s = ph.WavePlateSetting(0, 20, 25, 45)
    p = ph.two_arm_povm(s, ph.DetectorNoise(0.75, 0.05))
    assert len(p) == 16
    a = ph.one_arm_noisy_povm(ph.WavePlateSetting(0, 20), ph.DetectorNoise(0.75, 0.05))
    assert np.allclose(p.elements[1], np.kron(a.elements[0], ph.one_arm_noisy_povm(ph.WavePlateSetting(25, 45), ph.DetectorNoise(0.75, 0.05)).elements[1]))


def test_noise_free_limit_matches_probabilities():
    ens_clean = ph.build_one_arm_ensemble(ph.angle_grid(15), None, ph.RHO_MIXED)
    ens_limit = ph.build_one_arm_ensemble(ph.angle_grid(15), ph.DetectorNoise(1, 0), ph.RHO_MIXED)
    for a, b in zip(ens_clean, ens_limit):
        pa = [np.trace(e @ a.rho.matrix).real for e in a.povm.elements]
        pb = [np.trace(e @ b.rho.matrix).real for e in b.povm.elements]
        assert np.allclose(pa, pb[: len(pa)], atol=1e-12)


def test_osr_ensemble_36_configs():
    ens = ph.build_osr_ensemble()
    assert len(ens) == 36
    assert ens.labels[23] == "h=30,q=45,in=|-i>"


def test_channel_identity_component_probabilities():
    prob = ph.bitflip_depolarizing_problem(25)
    p = prob.probabilities([1.0, 0.0, 0.0])
    for cfg, pg in zip(prob.ensemble, p):
        direct = [np.trace(e @ cfg.rho.matrix).real for e in cfg.povm.elements]
        assert np.allclose(pg, direct, atol=1e-12)


@pytest.mark.parametrize("theta", [0, 45, 90])
def test_channel_bad_angles_not_identifiable(theta):
    prob = ph.bitflip_depolarizing_problem(theta)
    with pytest.raises(NotIdentifiable):
        crb_value(fisher_blocks(prob, ph.CHANNEL_Q), np.full(16, 1 / 16))


def test_channel_det_vanishes_only_on_bad_set():
    for deg in range(1, 90):
        t = np.deg2rad(deg)
        d = channel_det_R(np.cos(t), np.sin(t))
        if deg == 45:
            assert abs(d) <= 1e-14
        else:
            assert abs(d) > 1e-6


def test_hadamard_problem_shapes():
    p = ph.hadamard_hamiltonian_problem(1.0, ("ket0", "had0"))
    assert p.n_configs == 200
    assert np.isclose(ph.hadamard_times()[1], (np.pi / 2) / 99)
    with pytest.raises(InputError):
        ph.hadamard_hamiltonian_problem(0.0)
    with pytest.raises(InputError):
        ph.hadamard_hamiltonian_problem(1.0, ("nope",))
