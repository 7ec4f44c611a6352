import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_zero_probability():
    from tomoed.fisher import ZeroProbabilityWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroProbabilityWarning)
        yield


def random_unitary(rng, n):
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(rng, n, rank=None):
    k = n if rank is None else rank
    a = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    m = a @ a.conj().T
    return m / np.trace(m).real


def random_hermitian(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a + a.conj().T) / 2


def random_kraus(rng, n, k):
    """Trace-preserving Kraus set from an isometry."""
    v = random_unitary(rng, n * k)[:, :n]
    return [v[i * n:(i + 1) * n] for i in range(k)]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    order = sorted(results, key=lambda k: (int("".join(ch for ch in k if ch.isdigit())), k))
    for key in order:
        ok, detail = results[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} - {detail}")


def mp_expected_nll_hessian(problem, x0, c, w, h="1e-12", dps=50):
    """Central second differences of E L(z) = -sum w p_true log p(x0 + C z) in extended precision.

    Double-precision differences lose about eps*|E L|/h^2, which is not small
    when the information is tiny compared with E L.
    """
    import mpmath as mp

    with mp.workdps(dps):
        rows = [mp.matrix([[mp.mpf(float(v)) for v in row] for row in r]) for r in problem.rows]
        x0m = mp.matrix([mp.mpf(float(v)) for v in x0])
        cm = mp.matrix([[mp.mpf(float(v)) for v in row] for row in c])
        ptrue = [r * x0m for r in rows]
        wm = [mp.mpf(float(v)) for v in w]

        def el(z):
            x = x0m + cm * z
            s = mp.mpf(0)
            for wg, r, pt in zip(wm, rows, ptrue):
                p = r * x
                s -= wg * mp.fsum(pt[a] * mp.log(p[a]) for a in range(r.rows))
            return s

        d = c.shape[1]
        step = mp.mpf(h)
        hess = np.zeros((d, d))
        for i in range(d):
            for j in range(d):
                ei, ej = mp.matrix(d, 1), mp.matrix(d, 1)
                ei[i] = step
                ej[j] = step
                v = (el(ei + ej) - el(ei - ej) - el(-ei + ej) + el(-ei - ej)) / (4 * step * step)
                hess[i, j] = float(v)
        return hess
