import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hoclab.core import (AnalyticMeta, Fitness, ModelSpec, build_grid, canonical, discretize_model,
                         pair, quad)
from hoclab.errors import DegenerateCriticalError, UnsupportedError
from hoclab.oracle import closed_form_lambda_affine
from hoclab.spectral import (analyze, build_gamma, build_h, classify, eigen_residual, estimate_rho,
                             h_transform, perron_value, solve_lambda)

from oracles import ALPHA_F, ALPHA_S, INF_RATE_F, LAMBDA_F, LAMBDA_HALF_SLOPE, PERRON_F_AT_1, RHO_C


def _model(fitness, n=512, meta=AnalyticMeta(), calibrate=False):
    spec = ModelSpec(0.0, 1.0, fitness, meta=meta, calibrate_rho=calibrate)
    return discretize_model(spec, build_grid(0.0, 1.0, n))


def test_perron_value_examples(model_f):
    assert perron_value(model_f, 1.0) == pytest.approx(PERRON_F_AT_1, abs=1e-6)
    with pytest.raises(ValueError):
        perron_value(model_f, -0.1)


def test_fast_model_values(spec_f):
    rep = spec_f.report
    assert rep.regime == "fast"
    assert rep.divergent
    assert rep.lam == pytest.approx(LAMBDA_F, abs=1e-5)
    assert rep.alpha == pytest.approx(ALPHA_F, abs=1e-5)
    assert spec_f.cmodel.inf_rate == pytest.approx(INF_RATE_F, abs=1e-5)


def test_half_slope_lambda():
    spec = analyze(_model(Fitness("power", c=0.5, p=1.0)))
    assert spec.report.lam == pytest.approx(LAMBDA_HALF_SLOPE, abs=1e-5)
    assert closed_form_lambda_affine(0.5) == pytest.approx(LAMBDA_HALF_SLOPE, rel=1e-14)
    assert closed_form_lambda_affine(1.0) == pytest.approx(LAMBDA_F, rel=1e-14)


def test_critical_model(spec_s):
    rep = spec_s.report
    assert rep.regime == "critical" and rep.lam == 0.0
    assert rep.alpha == pytest.approx(ALPHA_S, rel=2e-3)
    assert math.isinf(spec_s.h.value0)
    assert spec_s.cmodel.ba0 == 0.0
    assert not rep.degenerate


def test_subcritical_model(spec_c, model_c):
    rep = spec_c.report
    assert rep.regime == "subcritical" and rep.lam == 0.0 and rep.alpha is None
    assert spec_c.cmodel is None
    assert spec_c.gamma.atom0 == pytest.approx(1 - RHO_C, abs=1e-3)
    assert spec_c.gamma.total_mass(model_c.grid) == pytest.approx(1.0, abs=1e-14)
    assert spec_c.h.value0 == pytest.approx(1 / (1 - RHO_C), rel=2e-3)
    assert np.all(spec_c.h.values == 0)
    with pytest.raises(UnsupportedError):
        h_transform(model_c, 0.0, None)


@pytest.mark.parametrize("name", ["F", "S", "C"])
def test_residuals_small(name):
    spec = analyze(canonical(name, 256))
    res = spec.report.residuals
    assert res["gamma"] < 1e-10
    assert res["h"] < 1e-10 if name != "C" else res["h"] < 1e-12
    assert res["pairing"] < 1e-10
    if "pi_mass" in res:
        assert res["pi_mass"] < 1e-12


def test_degenerate_critical_is_reported():
    # a = 2 sqrt(x): rho = 1 but Q/a^2 = 1/(4x) is not integrable
    m = _model(Fitness("power", c=2.0, p=0.5), meta=AnalyticMeta(rho=1.0))
    with pytest.raises(DegenerateCriticalError):
        build_h(m, 0.0, "critical")
    spec = analyze(m)
    assert spec.report.regime == "critical"
    assert spec.report.degenerate
    assert spec.cmodel is None and spec.h is None
    assert spec.report.to_dict()["degenerate"] is True


def test_rho_estimates():
    coarse, fine, div = estimate_rho(canonical("C", 256))
    assert not div and fine == pytest.approx(RHO_C, abs=1e-3)
    coarse, fine, div = estimate_rho(canonical("F", 256))
    assert div and fine > coarse


def test_regime_precedence(model_c):
    assert classify(model_c, 0.5, False, "critical") == "critical"
    assert classify(model_c, 5.0, False) == "subcritical"  # declared rho wins over the estimate
    m = _model(Fitness("power", c=1.0, p=0.5), meta=AnalyticMeta(regime="fast"))
    assert classify(m, 0.0, False) == "fast"
    plain = _model(Fitness("power", c=1.0, p=0.5), n=64)
    assert classify(plain, 1.0005, False) == "critical"
    assert classify(plain, 1.01, False) == "fast"
    assert classify(plain, 0.0, True) == "fast"
    with pytest.raises(ValueError):
        classify(plain, 1.0, False, "hot")


def test_report_dict_uses_lambda_key(spec_f):
    d = spec_f.report.to_dict()
    assert "lambda" in d and "lam" not in d
    assert d["rho_fine"] is None or math.isfinite(d["rho_fine"])


def test_solve_lambda_subcritical_returns_zero(model_c):
    assert solve_lambda(model_c) == 0.0
    with pytest.raises(ValueError):
        solve_lambda(model_c, tol=0.0)


def test_h_transform_structure(spec_f, model_f):
    cm = spec_f.cmodel
    g = model_f.grid
    assert quad(cm.bQ, g) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(cm.ba, cm.alpha * (cm.lam + model_f.a))
    assert cm.ba0 == pytest.approx(cm.alpha * cm.lam)
    np.testing.assert_allclose(cm.bQ, spec_f.gamma.dens / quad(spec_f.gamma.dens, g), rtol=1e-13)
    assert pair(spec_f.gamma, spec_f.h, g) == pytest.approx(1.0, abs=1e-12)


def test_eigen_residual_detects_wrong_lambda(model_f, spec_f):
    gamma = build_gamma(model_f, spec_f.report.lam + 0.01, "fast")
    _, h = build_h(model_f, spec_f.report.lam + 0.01, "fast")
    rg, rh, _ = eigen_residual(model_f, spec_f.report.lam, gamma, h)
    assert rg > 1e-3 and rh > 1e-3


def test_eigen_residual_grid_order_at_exact_lambda():
    res = []
    for n in (32, 64, 128):
        m = discretize_model(canonical("F", 4).spec, build_grid(0.0, 1.0, n, 1.0))
        _, h = build_h(m, LAMBDA_F, "fast")
        res.append(eigen_residual(m, LAMBDA_F, build_gamma(m, LAMBDA_F, "fast"), h)[0])
    orders = [math.log2(a / b) for a, b in zip(res, res[1:])]
    assert all(o > 1.9 for o in orders), orders


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 4.0), st.floats(0.0, 5.0), st.floats(0.01, 5.0))
def test_perron_value_monotone(c, lam, step):
    m = _model(Fitness("power", c=c, p=1.0), n=64)
    assert perron_value(m, lam + step) < perron_value(m, lam)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 3.0))
def test_affine_lambda_matches_closed_form(slope):
    # midpoint error at n = 256 grows with the slope (about 4e-4 relative at slope 3)
    spec = analyze(_model(Fitness("power", c=slope, p=1.0), n=256))
    assert spec.report.lam == pytest.approx(closed_form_lambda_affine(slope), rel=2e-3)
