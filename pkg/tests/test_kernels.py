import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hoclab import _kernels_py, kernels
from hoclab.kernels import ETD4_POSITIVE_LIMIT, RankOneStepper, phi_functions

compiled = pytest.importorskip("hoclab._kernels")


def _system(n, seed):
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.0, 2.0, n)
    s = np.concatenate([[0.0], rng.uniform(0, 1, n - 1)])
    c = rng.uniform(0, 1, n)
    y = rng.uniform(0, 1, n)
    return r, s, c, y


@pytest.mark.parametrize("scheme", ["etd2", "etd4"])
@pytest.mark.parametrize("renorm", [False, True])
def test_backends_agree(scheme, renorm):
    r, s, c, y = _system(200, 3)
    st_ = RankOneStepper(r, s, c, 0.05, scheme)
    out = {}
    for mod in (_kernels_py, compiled):
        yy = y.copy()
        if scheme == "etd2":
            lg = mod.etd2_advance(yy, st_.E, st_.K, st_.s, st_.c, 40, renorm)
        else:
            lg = mod.etd4_advance(yy, st_.E, st_.E2, st_.K2, st_.f1, st_.f2, st_.f3, st_.s, st_.c, 40, renorm)
        out[mod.__name__] = (yy, lg)
    (a, la), (b, lb) = out.values()
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)
    assert la == pytest.approx(lb, rel=1e-12, abs=1e-14)


def test_bregman_backends_agree():
    rng = np.random.default_rng(1)
    f = rng.uniform(0.1, 3, 1500)
    q = rng.uniform(0, 1, 1500)
    args = (f, f ** 2, 2 * f, q)
    assert compiled.bregman_sum(*args) == pytest.approx(_kernels_py.bregman_sum(*args), rel=1e-12)
    # x^2 Bregman gap is (f_i - f_j)^2
    direct = float(q @ ((f[:, None] - f[None, :]) ** 2) @ q)
    assert kernels.bregman_sum(*args) == pytest.approx(direct, rel=1e-12)


def test_use_backend_switches():
    before = kernels.BACKEND
    try:
        kernels.use_backend("python")
        assert kernels.BACKEND == "python"
        kernels.use_backend("cython")
        assert kernels.BACKEND == "cython"
        with pytest.raises(ValueError):
            kernels.use_backend("fortran")
    finally:
        kernels.use_backend(before)


@pytest.mark.parametrize("x", [0.0, 1e-8, 0.1, 0.49, 0.5, 0.51, 2.0, 40.0])
def test_phi_functions_match_closed_forms(x):
    import mpmath as mp
    mp.mp.dps = 40
    X = mp.mpf(x)
    if x == 0:
        ref = (1.0, 0.5, 1.0 / 6)
    else:
        e = mp.exp(-X)
        ref = ((1 - e) / X, (X - 1 + e) / X ** 2, (X ** 2 / 2 - X + 1 - e) / X ** 3)
    got = phi_functions(np.array([x]))
    for g, r in zip(got, ref):
        assert g[0] == pytest.approx(float(r), rel=1e-14)


def test_etd4_weights_nonnegative_up_to_limit():
    x = np.linspace(0.0, ETD4_POSITIVE_LIMIT, 2001)
    st_ = RankOneStepper(x, np.zeros_like(x), np.ones_like(x), 1.0, "etd4")
    for w in (st_.E, st_.E2, st_.K2, st_.f1, st_.f2, st_.f3):
        assert np.all(w >= 0)


def test_auto_scheme_switch():
    r = np.array([0.0, 5.0])
    assert RankOneStepper(r, r, r, 0.2, "auto").scheme == "etd4"
    assert RankOneStepper(r, r, r, 0.3, "auto").scheme == "etd2"
    with pytest.raises(ValueError):
        RankOneStepper(r, r, r, 0.0)
    with pytest.raises(ValueError):
        RankOneStepper(r, r, r, 0.1, "rk4")


@pytest.mark.parametrize("scheme", ["etd2", "etd4"])
def test_pure_decay_is_exact(scheme):
    r = np.array([0.3, 1.0, 7.0])
    y = np.ones(3)
    RankOneStepper(r, np.zeros(3), np.ones(3), 0.1, scheme).advance(y, 50)
    np.testing.assert_allclose(y, np.exp(-5.0 * r), rtol=1e-13)


@pytest.mark.parametrize("scheme,order", [("etd2", 2), ("etd4", 4)])
def test_convergence_order_scalar(scheme, order):
    # y' = -2 y + 1.5 y: exact solution exp(-0.5 t), source routed through the rank-one term
    r, s, c = np.array([2.0]), np.array([1.5]), np.array([1.0])
    errs = []
    for dt in (0.1, 0.05, 0.025):
        y = np.ones(1)
        RankOneStepper(r, s, c, dt, scheme).advance(y, int(round(2.0 / dt)))
        errs.append(abs(y[0] - math.exp(-1.0)))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(p - order) < 0.3 for p in rates), rates


def test_renorm_returns_log_growth():
    r, s, c = np.array([2.0]), np.array([1.5]), np.array([1.0])
    y = np.ones(1)
    lg = RankOneStepper(r, s, c, 0.01, "etd4").advance(y, 100, renorm=True)
    assert y[0] == pytest.approx(1.0)
    assert lg == pytest.approx(-0.5, abs=1e-10)
    assert RankOneStepper(r, s, c, 0.01).advance(y, 0) == 0.0


@settings(max_examples=40, deadline=None)
@given(dt=st.floats(1e-3, 50.0), seed=st.integers(0, 10_000))
def test_positivity_any_dt(dt, seed):
    r, s, c, y = _system(30, seed)
    RankOneStepper(r, s, c, dt, "auto").advance(y, 5)
    assert np.all(y >= 0)


def test_env_var_forces_fallback():
    import os
    import subprocess
    import sys
    env = dict(os.environ, HOCLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import hoclab.kernels as k; print(k.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"
