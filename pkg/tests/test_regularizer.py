import csv
import io
import json
import math

import mpmath
import numpy as np
import pytest

from twisted_torsion import landau, model_kernel, regularizer
from twisted_torsion.clifford import ThreeForm
from twisted_torsion.constants import EULER_GAMMA
from twisted_torsion.landau import CertificationError
from twisted_torsion.model_kernel import CurvatureSpectrum
from twisted_torsion.torus import TorusModel, reference_model

REF = reference_model(1)
TWIST = reference_model(2, ThreeForm(2, {(1, 2, 3): 0.5}))


def ref_data(p, K=24):
    return landau.landau_spectrum(REF, p, K)


def test_heat_supertrace_geometric_series():
    # n = 1 reference: S(u) p = -p sum_k e^{-2 pi k u} = -p/(e^{2 pi u} - 1)
    p = 8
    data = ref_data(p, 40)
    for u in (0.3, 1.0, 2.5):
        assert regularizer.heat_supertrace(data, u) == pytest.approx(-p / math.expm1(2 * math.pi * u), rel=1e-12)


def test_heat_supertrace_requires_certificate():
    with pytest.raises(CertificationError):
        regularizer.heat_supertrace(ref_data(8, 4), 0.01)
    with pytest.raises(ValueError):
        regularizer.heat_supertrace(ref_data(8, 4), 0.0)


def test_beta_reference_values():
    e = regularizer.beta_coefficients(REF, 8)
    assert e.beta[-1] == pytest.approx(-1 / (2 * math.pi), rel=1e-14)
    assert e.beta[0] == 0.5
    double = TorusModel(CurvatureSpectrum((2 * math.pi,), 1.0, 2), None)
    assert regularizer.beta_coefficients(double, 8).beta[0] == 1.0
    with pytest.raises(ValueError):
        regularizer.beta_coefficients(TWIST, 4, jmax=1)


def test_beta_closed_form_agrees_with_parametrix():
    a = regularizer.beta_coefficients(TWIST, 8, jmax=6)
    b = regularizer.beta_coefficients(TWIST, 8, jmax=6, method="parametrix")
    for j in a.beta:
        assert a.beta[j] == pytest.approx(b.beta[j], rel=1e-10, abs=1e-12)


def test_fitted_beta_cross_validation():
    data = landau.landau_spectrum(REF, 1, 3000)
    fit, resid = regularizer.fit_beta(data, 1, u_lo=5e-3, u_hi=5e-2, order=3)
    closed = regularizer.beta_coefficients(REF, 1).beta
    assert fit[-1] == pytest.approx(closed[-1], rel=1e-8)
    assert fit[0] == pytest.approx(closed[0], rel=1e-6)


def test_small_u_model_matches_spectrum_twisted():
    data = landau.landau_spectrum(TWIST, 4, 24)
    e = regularizer.beta_coefficients(TWIST, 4)
    u_c = data.certified_u(regularizer.CERT_TOL)
    us = np.linspace(u_c, 1.5 * u_c, 6)
    spec = regularizer._spectral_S(data, us)
    model = np.array([regularizer._small_u_remainder(TWIST, e, u) + e.singular_part(u) for u in us])
    assert np.max(np.abs(spec - model)) < 1e-5
    assert regularizer.series_mismatch(TWIST, data, e, u_c) == pytest.approx(np.max(np.abs(spec - model)), rel=0.5)


def test_subtraction_leaves_order_u():
    for model, p in ((REF, 8), (TWIST, 8)):
        e = regularizer.beta_coefficients(model, p)
        assert regularizer.subtraction_exponent(model, e) >= 0.9


def test_theta_zero_reference_and_regime():
    for p in (1, 8, 64):
        assert regularizer.theta_zero(REF, p, regularizer.beta_coefficients(REF, p)) == -p / 2
    strong = reference_model(2, ThreeForm(2, {(1, 2, 3): 3.0}))
    kern = landau.kernel_data(strong, 1)
    with pytest.raises(regularizer.RegimeError):
        regularizer.theta_zero(strong, 1, regularizer.beta_coefficients(strong, 1), kernel=kern)


@pytest.mark.parametrize("p", [1, 8, 64])
def test_theta_prime_reference(p):
    r = regularizer.theta_prime_zero(REF, p, ref_data(p), regularizer.beta_coefficients(REF, p))
    assert r.theta_prime0 == pytest.approx(0.5 * p * math.log(p), abs=1e-9 * max(1, p))
    assert r.torsion == pytest.approx(math.exp(-r.theta_prime0 / 2))
    assert r.series_mismatch < 1e-8


def test_direct_spectral_continuation():
    assert regularizer.direct_spectral_theta_prime(ref_data(8), 8) == pytest.approx(4 * math.log(8), rel=1e-13)
    model = TorusModel(CurvatureSpectrum((4 * math.pi,), 0.5), None)
    data = landau.landau_spectrum(model, 4, 24)
    split = regularizer.theta_prime_zero(model, 4, data, regularizer.beta_coefficients(model, 4)).theta_prime0
    assert regularizer.direct_spectral_theta_prime(data, 4) == pytest.approx(split, rel=1e-9)
    assert split == pytest.approx(model_kernel.theorem1_rhs(model.spec, 4), rel=1e-9)
    with pytest.raises(ValueError):
        regularizer.direct_spectral_theta_prime(landau.landau_spectrum(TWIST, 4, 6), 4)


def test_mellin_by_mpmath_and_log_p_invariant():
    # theta(z) = p^{1-z} F(z) with F(z) = -(2 pi)^{-z} zeta(z) for the reference model,
    # so theta'(0) = -theta(0) ln p - p F'(0)
    p = 16
    F = lambda z: -(2 * mpmath.pi) ** (-z) * mpmath.zeta(z)
    theta = lambda z: -(p ** (1 - z)) * F(z)
    direct = float(mpmath.diff(theta, 0))
    split = -(-p / 2) * math.log(p) - p * float(mpmath.diff(F, 0))
    assert direct == pytest.approx(split, rel=1e-12)
    r = regularizer.theta_prime_zero(REF, p, ref_data(p), regularizer.beta_coefficients(REF, p))
    assert r.theta_prime0 == pytest.approx(direct, rel=1e-9)


def test_euler_constant_sign():
    # flipping the sign of the gamma term moves theta' by 2 gamma beta_0 p^n
    p = 8
    e = regularizer.beta_coefficients(REF, p)
    r = regularizer.theta_prime_zero(REF, p, ref_data(p), e)
    flipped = r.theta_prime0 + 2 * EULER_GAMMA * e.beta[0] * p
    oracle = 0.5 * p * math.log(p)
    assert abs(r.theta_prime0 - oracle) < 1e-9
    assert abs(flipped - oracle) > 1.0


def test_quadrature_path():
    p = 8
    data, e = ref_data(p), regularizer.beta_coefficients(REF, p)
    t0, t1 = regularizer.theta_by_quadrature(REF, p, data, e)
    assert t0 == pytest.approx(-p / 2, abs=1e-8 * p)
    assert t1 == pytest.approx(0.5 * p * math.log(p), rel=1e-8)
    with pytest.raises(ValueError):
        regularizer.theta_function(REF, p, data, e, 0.7)


def test_twisted_stable_in_jmax():
    data = landau.landau_spectrum(TWIST, 4, 24)
    vals = [regularizer.theta_prime_zero(TWIST, 4, data, regularizer.beta_coefficients(TWIST, 4, jmax=j)).theta_prime0
            for j in (8, 10)]
    assert vals[0] == pytest.approx(vals[1], rel=1e-5)


def test_uncertified_split_raises():
    data = landau.landau_spectrum(TWIST, 4, 4)
    with pytest.raises(CertificationError):
        regularizer.theta_prime_zero(TWIST, 4, data, regularizer.beta_coefficients(TWIST, 4))


def test_report_format_and_verdict():
    rep = regularizer.asymptotics_report(REF, [4, 8], K=24)
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == regularizer.REPORT_COLUMNS
    assert len(rows) == 3
    doc = json.loads(rep.to_json())
    assert doc["verdict"]["pass"] and doc["verdict"]["saturated"]
    assert doc["header"]["cutoff"] == 24
    with pytest.raises(ValueError):
        regularizer.asymptotics_report(REF, [])
    with pytest.raises(ValueError):
        regularizer.asymptotics_report(REF, [8, 4])


def test_trend_verdict_logic():
    def rows(res, gaps=(1.0, 1.0, 1.0)):
        return [{"residual": r, "theta_prime0": 100.0, "residual_scaled": r, "gap_over_p": g}
                for r, g in zip(res, gaps)]
    assert regularizer.trend_verdict(rows([1e-3, 5.0, 4.0]))["pass"]
    assert not regularizer.trend_verdict(rows([1.0, 2.0, 3.0]))["pass"]
    assert not regularizer.trend_verdict(rows([0.0, 0.0, 0.0], gaps=(1.0, 0.0, 1.0)))["pass"]
    assert regularizer.strictly_decreasing([3, 2, 1]) and not regularizer.strictly_decreasing([3, 3])
