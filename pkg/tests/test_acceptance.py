"""Acceptance criteria, each at its stated tolerance.

Every criterion records one PASS/FAIL line; the lines are printed in the
terminal summary by ``conftest.pytest_terminal_summary``.
"""

import itertools
import math
import time
import warnings

import numpy as np
import pytest

from tomoed import estimator as es
from tomoed import oed
from tomoed import photonics as ph
from tomoed import simlab as sl
from tomoed import tables
from tomoed.fidelity import worst_case_fidelity
from tomoed.fisher import channel_det_R, crb_value, fisher_blocks
from tomoed.numerics import herm_expm
from tomoed.qmodel import Configuration, ConfigurationEnsemble, DensityMatrix, PovmSet, StateProblem

from conftest import mp_expected_nll_hessian, random_density, random_unitary

RESULTS = {}


def record(key, ok, detail):
    RESULTS[key] = (bool(ok), detail)
    return ok


def table_detail(res):
    misses = [f"{r.key}: {r.computed} vs {r.expected}" for r in res.rows if r.passed is False]
    return "all rows within tolerance" if not misses else f"{len(misses)} miss(es): " + "; ".join(misses)


def fresh(fn, *args):
    for cached in (tables.one_arm_design, tables.two_arm_design, tables.osr_design):
        cached.cache_clear()
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


# -------------------------------------------------------------- 1 - 7


def test_criterion_1_gap_ratios():
    res, sec = fresh(tables.reproduce, "gap-1arm")
    ok = res.passed and sec <= 30
    record("1", ok, f"{table_detail(res)}; {sec:.1f} s (limit 30 s)")
    assert ok, table_detail(res)


def test_criterion_2_min_experiments_one_arm():
    res, sec = fresh(tables.reproduce, "min-expts-1arm")
    ok = res.passed and sec <= 120
    record("2", ok, f"{table_detail(res)}; {sec:.1f} s (limit 120 s)")
    assert ok, table_detail(res)


def test_criterion_3_suboptimal_support():
    model, d = tables.one_arm_design("pure,none")
    lam_sub = oed.truncate_design(d, model, 8, tables.V0, curve=False).lam_sub
    labels = [s.label for s in ph.angle_grid()]
    big = {labels[g]: round(float(lam_sub[g]), 4) for g in np.flatnonzero(lam_sub >= 0.2)}
    want = {"h=0,q=0": 0.24, "h=20,q=45": 0.25, "h=25,q=45": 0.25, "h=45,q=0": 0.24}
    ok = set(big) == set(want) and all(abs(big[k] - want[k]) <= 0.02 for k in want)
    record("3", ok, f"weights >= 0.2: {big}")
    assert ok


def test_criterion_4_two_arm():
    res, sec = fresh(tables.reproduce, "min-expts-2arm")
    ok = res.passed and sec <= 600
    record("4", ok, f"{table_detail(res)}; {sec:.1f} s (limit 600 s)")
    assert ok, table_detail(res)


def test_criterion_5_osr_design():
    totals = tables.reproduce("osr-min-expts")
    graded = [r for r in totals.rows if r.passed is not None and r.key.startswith("0.01/")]
    support = tables.reproduce("osr-support")
    rows = {r.key: r for r in support.rows}
    ok_tot = all(r.passed for r in graded)
    ok_sup = bool(rows["support-set"].passed)
    ok_top = bool(rows["top-weight"].passed)
    ok = ok_tot and ok_sup and ok_top
    detail = (
        f"totals {[(r.key, r.computed, r.expected) for r in graded]} {'ok' if ok_tot else 'MISS'}; "
        f"support size {rows['support-size'].computed} vs 22 {'ok' if ok_sup else 'MISS'}; "
        f"top gamma {rows['top-gamma'].computed} weight {rows['top-weight'].computed} vs 0.141 {'ok' if ok_top else 'MISS'}"
    )
    record("5", ok, detail)
    assert ok, detail


def test_criterion_6_channel():
    dets = {th: channel_det_R(math.cos(math.radians(th)), math.sin(math.radians(th))) for th in (0, 45, 90)}
    ok_det = all(abs(v) <= 1e-12 for v in dets.values())
    t25 = tables.channel_total(25.0)
    ok_25 = abs(t25 - 68736) <= 0.02 * 68736
    down = [tables.channel_total(float(t)) for t in (25, 20, 15, 10, 5, 2)]
    up = [tables.channel_total(float(t)) for t in (25, 30, 35, 40, 44)]
    ok_mono = all(a < b for a, b in zip(down, down[1:])) and all(a < b for a, b in zip(up, up[1:]))
    ok_far = down[-1] > 4e6 and up[-1] > 4e6
    ok = ok_det and ok_25 and ok_mono and ok_far
    record("6", ok, f"max |det R| {max(abs(v) for v in dets.values()):.1e}; theta=25 total {t25}; toward 0: {down}; toward 45: {up}")
    assert ok


def test_criterion_7_hadamard():
    res = tables.reproduce("hadamard-topt")
    record("7", res.passed, table_detail(res))
    assert res.passed, table_detail(res)


# -------------------------------------------------------------------- 8


def _hull_distance_sq(lam):
    # squared distance from 0 to the hull of unit-circle points: the chord
    # opposite the largest angular gap, or 0 when no gap exceeds pi
    ang = np.sort(np.angle(lam))
    big = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]])).max()
    return 0.0 if big <= np.pi else float(np.cos(big / 2) ** 2)


def test_criterion_8_fidelity():
    worst_closed = 0.0
    for delta in np.linspace(-0.2, 0.2, 81):
        u_act = -1j * ph.U_HAD @ herm_expm(ph.U_HAD, delta * np.pi / 2)
        worst_closed = max(worst_closed, abs(worst_case_fidelity(ph.U_HAD, u_act).value - np.cos(np.pi * delta / 2) ** 2))
    rng = np.random.default_rng(8)
    samples = {}
    for n in (2, 3, 4):
        z = rng.normal(size=(100000, n)) + 1j * rng.normal(size=(100000, n))
        samples[n] = z / np.linalg.norm(z, axis=1, keepdims=True)
    above, gap, wide, hull = 0.0, 0.0, [], 0.0
    for k in range(100):
        n = (2, 3, 4)[k % 3]
        a, b = random_unitary(rng, n), random_unitary(rng, n)
        res = worst_case_fidelity(a, b)
        qp = res.value
        w = a.conj().T @ b
        psis = samples[n]
        smin = float(np.min(np.abs(np.einsum("si,ij,sj->s", psis.conj(), w, psis)) ** 2))
        above = max(above, qp - smin)
        gap = max(gap, smin - qp)
        if smin - qp > 1e-3:
            wide.append((n, round(smin - qp, 5)))
        hull = max(hull, abs(qp - _hull_distance_sq(np.exp(1j * res.eigenphases))))
    ok = worst_closed <= 1e-8 and above <= 1e-9 and gap <= 1e-3
    record(
        "8",
        ok,
        f"closed-form error {worst_closed:.1e}; max(QP - sampled) {above:.1e}; max(sampled - QP) {gap:.1e}; "
        f"pairs beyond 1e-3 (n, gap) {wide}; exact hull-distance oracle agrees to {hull:.1e}",
    )
    assert ok


# -------------------------------------------------------------------- 9


def _random_state_problem(rng, k, rho=None):
    cfgs = []
    for g in range(k):
        u = random_unitary(rng, 2)
        e0 = np.outer(u[:, 0], u[:, 0].conj())
        cfgs.append(Configuration(PovmSet((e0, np.eye(2) - e0)), DensityMatrix(np.eye(2) / 2), f"c{g}"))
    rho = random_density(rng, 2) if rho is None else rho
    return StateProblem(ConfigurationEnsemble(tuple(cfgs))), rho


def _design_models():
    warnings.simplefilter("ignore")
    out = {}
    for case in ("pure,none", "pure,noise", "mixed,none", "mixed,noise"):
        out[f"one-arm {case}"] = tables.one_arm_design(case)[0]
    out["osr literal"] = tables.osr_design("literal")[0]
    out["osr consistent"] = tables.osr_design("consistent")[0]
    out["channel 25"] = fisher_blocks(ph.bitflip_depolarizing_problem(25), ph.CHANNEL_Q)
    out["hadamard eps=1"] = fisher_blocks(ph.hadamard_hamiltonian_problem(1.0, ("ket0",)), [1.0])
    rng = np.random.default_rng(9)
    for i in range(20):
        prob, rho = _random_state_problem(rng, int(rng.integers(3, 12)))
        out[f"random {i}"] = fisher_blocks(prob, rho)
    return out


def test_criterion_9a_duality():
    worst_cs, worst_gap, failures = 0.0, 0.0, []
    for name, model in _design_models().items():
        d = oed.solve_design(model)
        c = d.certificate
        worst_cs = max(worst_cs, c.cs_residual)
        rel = abs(c.gap) / (1 + d.V)
        worst_gap = max(worst_gap, rel)
        if c.cs_residual > 1e-6 or rel > 1e-6:
            failures.append(name)
    ok = not failures
    record("9a", ok, f"max CS residual {worst_cs:.1e}; max gap/(1+V) {worst_gap:.1e}; failures {failures}")
    assert ok


def _trace_inv3(g):
    """Trace of the inverse of stacked symmetric 3x3 matrices (last axes)."""
    a, b, c = g[..., 0, 0], g[..., 1, 1], g[..., 2, 2]
    d, e, f = g[..., 0, 1], g[..., 0, 2], g[..., 1, 2]
    det = a * (b * c - f * f) - d * (d * c - f * e) + e * (d * f - b * e)
    minors = (b * c - f * f) + (a * c - e * e) + (a * b - d * d)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = minors / det
    return np.where(det > 1e-12, v, np.inf)


def _brute_force(blocks, step):
    n = int(round(1 / step))
    k = blocks.shape[0]
    best = np.inf
    rest = np.array([c for c in itertools.product(range(n + 1), repeat=k - 2) if sum(c) <= n], dtype=np.int64) if k > 2 else np.zeros((1, 0), dtype=np.int64)
    rs = rest.sum(axis=1)
    for first in range(n + 1):
        sel = rest[rs <= n - first]
        last = n - first - sel.sum(axis=1)
        lam = np.column_stack([np.full(len(sel), first), sel, last]) * step
        g = np.einsum("sk,kij->sij", lam, blocks)
        best = min(best, float(_trace_inv3(g).min()))
    return best


def test_criterion_9b_brute_force():
    rng = np.random.default_rng(91)
    worst, cases = -np.inf, []
    for k in (3, 4, 5):
        prob, rho = _random_state_problem(rng, k)
        model = fisher_blocks(prob, rho)
        blocks = np.array(model.blocks)
        gmin = _brute_force(blocks, 0.005)
        d = oed.solve_design(model)
        worst = max(worst, d.V - gmin)
        cases.append((k, round(d.V, 6), round(gmin, 6)))
    ok = worst <= 1e-4
    record("9b", ok, f"(configs, solver V, grid min) {cases}; max(solver - grid) {worst:.1e}")
    assert ok


def test_criterion_9c_fisher_vs_finite_differences():
    rng = np.random.default_rng(93)
    worst = 0.0
    for _ in range(20):
        prob, rho = _random_state_problem(rng, int(rng.integers(3, 8)))
        model = fisher_blocks(prob, rho)
        w = rng.uniform(0.1, 1.0, prob.n_configs)
        fd = mp_expected_nll_hessian(prob, prob.to_coords(rho), model.c_eq, w)
        worst = max(worst, np.linalg.norm(model.aggregate(w) - fd) / np.linalg.norm(fd))
    ok = worst <= 1e-5
    record("9c", ok, f"max relative error {worst:.1e} over 20 instances")
    assert ok


def test_criterion_9d_objective_above_lower_bound():
    rng = np.random.default_rng(94)
    worst, runs = -np.inf, 0
    for i in range(30):
        prob, rho = _random_state_problem(rng, int(rng.integers(3, 8)))
        alloc = rng.integers(1, 500, prob.n_configs)
        data = sl.sample_counts(prob, rho, alloc, sl.RngStream(94, i))
        for fn in (es.mle_state, es.mle_state_pure_relaxed):
            rep = fn(prob, data)
            worst = max(worst, rep.lower_bound - rep.objective)
            runs += 1
    for i in range(10):
        prob = ph.bitflip_depolarizing_problem(25)
        data = sl.sample_counts(prob, ph.CHANNEL_Q, np.full(prob.n_configs, 200), sl.RngStream(95, i))
        rep = es.mle_osr_distribution(prob, data)
        worst = max(worst, rep.lower_bound - rep.objective)
        runs += 1
    ok = worst <= 1e-9
    record("9d", ok, f"{runs} datasets; max(lower bound - objective) {worst:.1e}")
    assert ok


def test_criterion_9e_monte_carlo_crb():
    rho = ph.RHO_MIXED
    model, d = tables.one_arm_design("mixed,none")
    prob = ph.one_arm_problem(rho)
    l = oed.round_design(d, model, 100000).l
    crb = crb_value(model, l.astype(float)).V
    c = model.c_eq
    assert np.allclose(c.T @ c, np.eye(c.shape[1]), atol=1e-12)
    x0 = prob.to_coords(rho)
    err = []
    for r in range(200):
        data = sl.sample_counts(prob, rho, l, sl.RngStream(2024, r))
        est = es.mle_state(prob, data).estimate
        z = c.T @ (prob.to_coords(est) - x0)
        err.append(float(z @ z))
    ratio = float(np.mean(err)) / crb
    ok = 1 / 1.15 <= ratio <= 1.15
    record("9e", ok, f"MC mean squared error / CRB = {ratio:.3f} (200 replicates, l_total={int(l.sum())})")
    assert ok


# ------------------------------------------------------------------- 10


def test_criterion_10_adaptive_demos():
    u = sl.pulse_gate(sl.bell_pulse_table())
    err = float(np.linalg.norm(u - np.exp(-1j * np.pi / 4) * sl.U_BELL))
    good = sl.bell_adaptive(0.012)
    bad = sl.bell_adaptive(0.005)
    land = sl.landscape_scan()
    ok = err <= 1e-8 and good.converged and not bad.converged and abs(land.max_value - 0.96) <= 0.01 and land.local_maxima > 1
    record(
        "10",
        ok,
        f"pulse error {err:.1e}; start 0.012 -> {good.estimates[-1]:.6g} (converged {good.converged}); "
        f"start 0.005 -> {bad.estimates[-1]:.6g} (converged {bad.converged}); landscape max {land.max_value:.4f} at {land.argmax}, {land.local_maxima} local maxima",
    )
    assert ok
