import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import random_exact_operator
from twisted_torsion import _exact, model_kernel, pgrading
from twisted_torsion.clifford import ThreeForm
from twisted_torsion.model_kernel import CurvatureSpectrum
from twisted_torsion.pgrading import SymbolicOperator
from twisted_torsion.torus import TorusModel, reference_model

GOLDEN_SQUARE = (
    "p^0 x^(0, 0) d^(0, 2) [deg 2] : [-1 0; 0 -1]\n"
    "p^0 x^(0, 0) d^(2, 0) [deg 2] : [-1 0; 0 -1]\n"
    "p^1 x^(0, 0) d^(0, 0) [deg 2] : [-1 0; 0 1]\n"
    "p^1 x^(0, 1) d^(1, 0) [deg 2] : [-1i 0; 0 -1i]\n"
    "p^1 x^(1, 0) d^(0, 1) [deg 2] : [1i 0; 0 1i]\n"
    "p^2 x^(0, 2) d^(0, 0) [deg 2] : [1/4 0; 0 1/4]\n"
    "p^2 x^(2, 0) d^(0, 0) [deg 2] : [1/4 0; 0 1/4]"
)
GOLDEN_THETA1 = (
    "p^1 x^(0, 0) [deg 2] : [1 0; 0 -1]\n"
    "p^2 x^(0, 2) [deg 2] : [-1/12 0; 0 -1/12]\n"
    "p^2 x^(2, 0) [deg 2] : [-1/12 0; 0 -1/12]"
)


def unit_model(a=Fraction(1)):
    return TorusModel(CurvatureSpectrum((a,), float(2 * math.pi / a)), None)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_subadditivity_and_associativity(seed):
    rng = np.random.default_rng(seed)
    A, B, C = (random_exact_operator(rng, dim=2, nterms=2, max_pow=1) for _ in range(3))
    assert A.compose(B).degree() <= A.degree() + B.degree()
    assert A.compose(B).compose(C).equals(A.compose(B.compose(C)))


def test_canonical_commutator():
    for i in range(2):
        for j in range(2):
            d = SymbolicOperator.d(2, 1, i, exact=True)
            x = SymbolicOperator.x(2, 1, j, exact=True)
            comm = d.compose(x) - x.compose(d)
            want = SymbolicOperator.identity(2, 1, exact=True) if i == j else SymbolicOperator.zero(2, 1, True)
            assert comm.equals(want)


def test_degree_conventions():
    op = SymbolicOperator.monomial(2, 1, l=1, I=(1, 0), J=(0, 2), exact=True)
    assert op.degree() == 2 * 1 - 1 + 2
    assert SymbolicOperator.zero(2, 1).degree() == pgrading.NEG_INF


def test_golden_square_and_theta1():
    op = pgrading.assemble_dirac_squared(unit_model(), exact=True)
    assert op.canonical_text() == GOLDEN_SQUARE
    thetas = pgrading.parametrix_coefficients(op, 1)
    assert thetas[1].canonical_text() == GOLDEN_THETA1


def test_square_equals_bochner_form():
    model = TorusModel(CurvatureSpectrum((2 * math.pi, 4 * math.pi), 0.5),
                       ThreeForm(2, {(1, 2, 3): 0.5, (1, 3, 4): -0.25}))
    square = pgrading.assemble_dirac_squared(model)
    assert square.equals(pgrading.assemble_bochner_form(model), atol=1e-12)


def test_published_zeroth_order_term_differs():
    # with a single component the exact remainder is -2|B|^2, not -|B|^2
    B = ThreeForm(2, {(1, 2, 3): 0.5})
    model = reference_model(2, B)
    square = pgrading.assemble_dirac_squared(model)
    literal = pgrading.assemble_bochner_form(model, zeroth_order=-B.norm_squared() * np.eye(4))
    doubled = pgrading.assemble_bochner_form(model, zeroth_order=-2 * B.norm_squared() * np.eye(4))
    assert not square.equals(literal, atol=1e-12)
    assert square.equals(doubled, atol=1e-12)


def test_max_degree_part_is_b_free():
    model = reference_model(2, ThreeForm(2, {(1, 2, 3): 0.5, (2, 3, 4): 1.5}))
    assert pgrading.assemble_dirac_squared(model).degree() == 2
    assert pgrading.b_free_max_part(model)


@pytest.mark.parametrize("a", [Fraction(1), Fraction(3), Fraction(5, 2)])
def test_parametrix_top_order_matches_kappa(a):
    model = unit_model(a)
    thetas = pgrading.parametrix_coefficients(pgrading.assemble_dirac_squared(model, exact=True), 3)
    kappas = model_kernel.kappa_coefficients(model.spec, 3, exact=True)
    for j in range(4):
        top = thetas[j].at_origin().get(j, _exact.zeros(2, True))
        for r in range(2):
            assert _exact.qqi_to_fraction_pair(top[r][r]) == (kappas[j][r][r], 0)
    assert all(row[3] for row in pgrading.degree_audit(thetas))


def test_twisted_parametrix_audit():
    model = reference_model(2, ThreeForm(2, {(1, 2, 3): 0.5}))
    thetas = pgrading.parametrix_coefficients(pgrading.assemble_dirac_squared(model), 3)
    assert all(row[3] for row in pgrading.degree_audit(thetas))


def test_flat_laplacian_has_trivial_parametrix():
    lap = SymbolicOperator.zero(2, 1, True)
    for i in range(2):
        J = tuple(2 if k == i else 0 for k in range(2))
        lap = lap - SymbolicOperator.monomial(2, 1, J=J, exact=True)
    thetas = pgrading.parametrix_coefficients(lap, 3)
    assert thetas[0].canonical_text() == "p^0 x^(0, 0) [deg 0] : [1]"
    assert all(th.is_zero() for th in thetas[1:])


def test_parametrix_rejects_bad_input():
    op = pgrading.assemble_dirac_squared(unit_model(), exact=True)
    with pytest.raises(ValueError):
        pgrading.parametrix_coefficients(op, 5)
    with pytest.raises(ValueError):
        pgrading.parametrix_extended(op, 6)
    not_flat = op.scale(_exact.to_qqi(2))
    with pytest.raises(pgrading.NonFlatOperator):
        pgrading.parametrix_coefficients(not_flat, 1)


def test_extended_parametrix_agrees_with_guarded():
    op = pgrading.assemble_dirac_squared(reference_model(1))
    short = pgrading.parametrix_coefficients(op, 4)
    long = pgrading.parametrix_extended(op, 6)
    for a, b in zip(short, long):
        assert (a + (-b)).is_zero()
    assert all(row[3] for row in pgrading.degree_audit(long))


def test_mixing_exact_and_float_rejected():
    with pytest.raises(ValueError):
        SymbolicOperator.x(2, 1, 0, exact=True) + SymbolicOperator.x(2, 1, 0)
