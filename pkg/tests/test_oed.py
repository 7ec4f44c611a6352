import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tomoed import oed
from tomoed import photonics as ph
from tomoed.errors import AllZero, NotIdentifiable, TruncationNotIdentifiable
from tomoed.fisher import FisherModel, crb_value, fisher_blocks, min_experiments
from tomoed.qmodel import Configuration, ConfigurationEnsemble, DensityMatrix, PovmSet, StateProblem

from conftest import random_density, random_unitary


def _model(rng, k, d=3):
    """Random PSD blocks of rank one or two whose sum is invertible."""
    blocks = []
    for _ in range(k):
        a = rng.standard_normal((d, rng.integers(1, 3)))
        blocks.append(a @ a.T)
    return FisherModel(np.array(blocks), None, "test", None, tuple(f"c{i}" for i in range(k)))


def _state_model(rng, k):
    rho = random_density(rng, 2)
    cfgs = []
    for i in range(k):
        u = random_unitary(rng, 2)
        p = u[:, :1] @ u[:, :1].conj().T
        cfgs.append(Configuration(PovmSet((p, np.eye(2) - p)), DensityMatrix(rho), f"c{i}"))
    return fisher_blocks(StateProblem(ConfigurationEnsemble(tuple(cfgs))), rho)


def simplex_grid(m, step):
    """All points of the simplex whose coordinates are multiples of ``step``."""
    n = int(round(1 / step))
    for c in itertools.combinations(range(n + m - 1), m - 1):
        cuts = (-1,) + c + (n + m - 1,)
        yield np.diff(cuts) - 1


def grid_min(model, step):
    """Minimum of Tr G(lambda)^-1 over the grid, vectorized by chunks."""
    m = model.n_configs
    pts = np.array(list(simplex_grid(m, step)), dtype=float) * step
    g = np.einsum("pk,kij->pij", pts, model.blocks)
    w = np.linalg.eigvalsh(g)
    ok = w.min(axis=1) > 1e-12 * w.max(axis=1)
    v = np.full(len(pts), np.inf)
    v[ok] = np.sum(1 / w[ok], axis=1)
    return float(v.min())


@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_brute_force_design_equivalence(seed, k):
    rng = np.random.default_rng(seed)
    model = _model(rng, k)
    try:
        d = oed.solve_design(model)
    except NotIdentifiable:
        return
    gmin = grid_min(model, 0.005 if k < 4 else 0.01)
    assert d.V <= gmin + 1e-4
    assert d.certificate.dual_value <= gmin + 1e-9


@given(st.integers(0, 2**32 - 1))
def test_certificate_on_random_instances(seed):
    rng = np.random.default_rng(seed)
    model = _state_model(rng, 6)
    d = oed.solve_design(model)
    c = d.certificate
    assert c.cs_residual <= 1e-6
    assert abs(c.strong_duality - d.V) <= 1e-6 * (1 + d.V)
    assert c.gap <= 1e-6 * (1 + d.V)
    assert np.all(c.slacks <= 1e-7)
    assert np.linalg.eigvalsh(c.W).min() > 0
    assert abs(d.lam.sum() - 1) <= 1e-9 and d.lam.min() >= 0


def test_two_identical_configurations():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3))
    g = a @ a.T + np.eye(3)
    model = FisherModel(np.array([g, g]), None, "test", None, ("a", "b"))
    d = oed.solve_design(model)
    assert np.isclose(d.V, np.trace(np.linalg.inv(g)), rtol=1e-9)
    assert np.allclose(d.certificate.slacks, 0, atol=1e-9)
    assert d.certificate.gap <= 1e-9


def test_one_arm_pure_support():
    model = fisher_blocks(ph.one_arm_problem(ph.RHO_PURE), ph.RHO_PURE)
    d = oed.solve_design(model)
    top = {lab: round(w, 2) for _, lab, w in d.ranked(0.2)}
    assert set(top) == {"h=0,q=0", "h=20,q=45", "h=25,q=45", "h=45,q=0"}
    s = d.certificate.slacks + 1
    assert np.all(np.abs(s[d.lam > 1e-4] - 1) <= 1e-5)
    assert min_experiments(d.V, 1e-4) == 20307


def test_homogeneity():
    rng = np.random.default_rng(7)
    model = _model(rng, 5)
    d1 = oed.solve_design(model)
    d2 = oed.solve_design(model.scaled(4.0))
    assert np.allclose(d1.lam, d2.lam, atol=1e-6)
    assert np.isclose(d2.V, d1.V / 4, rtol=1e-8)


def test_round_design_simple():
    model = FisherModel(np.array([np.eye(1), 2 * np.eye(1)]), None, "t", None, ("a", "b"))
    d = oed.Design(np.array([1 / 3, 2 / 3]), 1.0, ("a", "b"))
    r = oed.round_design(d, model, 100)
    assert r.l.tolist() == [33, 67] and r.total == 100
    assert np.isclose(r.V_rounded, 1 / (33 + 2 * 67))


def test_round_half_away_and_all_zero():
    assert oed._round_half_away(np.array([0.5, 1.5, 2.5, 2.4999])).tolist() == [1, 2, 3, 2]
    model = FisherModel(np.array([np.eye(1)] * 4), None, "t", None, tuple("abcd"))
    with pytest.raises(AllZero):
        oed.round_design(oed.Design(np.full(4, 0.25), 1.0, tuple("abcd")), model, 1)


@given(st.integers(0, 2**32 - 1), st.integers(5, 5000))
def test_rounding_sandwich(seed, l_expt):
    rng = np.random.default_rng(seed)
    model = _state_model(rng, 6)
    d = oed.solve_design(model)
    try:
        r = oed.round_design(d, model, l_expt)
        v_round = crb_value(model, r.l.astype(float)).V
    except (AllZero, NotIdentifiable):
        return
    assert v_round == r.V_rounded
    assert d.bounds == (r.V_rounded, r.V_relaxed)
    # the real-valued optimum at the realized total bounds any integer allocation with that total
    assert r.V_rounded >= d.V / r.total * (1 - 1e-9)
    if r.total <= l_expt:
        assert r.V_rounded >= r.V_relaxed * (1 - 1e-9)


def test_truncation():
    model = fisher_blocks(ph.one_arm_problem(ph.RHO_PURE), ph.RHO_PURE)
    d = oed.solve_design(model)
    t8 = oed.truncate_design(d, model, 8, 1e-4)
    assert t8.l_sub == 20307
    assert abs(t8.lam_sub.sum() - 1) <= 1e-12 and np.count_nonzero(t8.lam_sub) <= 8
    full = oed.truncate_design(d, model, 100, 1e-4, curve=False)
    assert full.l_sub == min_experiments(d.V, 1e-4)
    with pytest.raises(TruncationNotIdentifiable):
        oed.truncate_design(d, model, 1, 1e-4)
    ks = [k for k, _ in t8.curve]
    assert ks == list(range(1, len(ks) + 1))
    assert t8.curve[0][1] is None


def test_top_k_stable_ties():
    assert oed.top_k(np.array([0.2, 0.3, 0.3, 0.2]), 3).tolist() == [0, 1, 2]


def test_not_identifiable_design():
    model = FisherModel(np.array([np.diag([1.0, 0.0])] * 3), None, "t", None, tuple("abc"))
    with pytest.raises(NotIdentifiable):
        oed.solve_design(model)


def test_zero_blocks_get_no_weight():
    blocks = np.array([np.eye(2), np.zeros((2, 2)), np.diag([1.0, 2.0])])
    d = oed.solve_design(FisherModel(blocks, None, "t", None, tuple("abc")))
    assert d.lam[1] <= 1e-7


def test_bootstrap_trace():
    prob = ph.one_arm_problem(ph.RHO_MIXED, step=15)
    l0 = np.full(prob.n_configs, 10000 // prob.n_configs)
    t1 = oed.bootstrap(prob, ph.RHO_MIXED, l0, 3, 10000, seed=5)
    t2 = oed.bootstrap(prob, ph.RHO_MIXED, l0, 3, 10000, seed=5)
    assert len(t1) == 3
    for a, b in zip(t1, t2):
        assert np.array_equal(a["l"], b["l"]) and a["V"] == b["V"]
        assert np.array_equal(a["estimate"].matrix, b["estimate"].matrix)
    vs = [r["V"] for r in t1]
    assert all(np.isfinite(vs))
    with pytest.raises(ValueError):
        oed.bootstrap(prob, ph.RHO_MIXED, l0, 0, 10000)


def test_bootstrap_single_round_is_estimate_then_design():
    from tomoed import estimator, simlab

    prob = ph.one_arm_problem(ph.RHO_MIXED, step=15)
    l0 = np.full(prob.n_configs, 500)
    tr = oed.bootstrap(prob, ph.RHO_MIXED, l0, 1, 10000, seed=9)
    data = simlab.sample_counts(prob, ph.RHO_MIXED, l0, simlab.RngStream(9))
    est = estimator.estimate(prob, data).estimate
    d = oed.solve_design(fisher_blocks(prob, est))
    assert np.allclose(tr[0]["lam"], d.lam)
