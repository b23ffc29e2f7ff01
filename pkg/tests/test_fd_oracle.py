import math

import numpy as np
import pytest

from _support import expand_levels
from twisted_torsion import fd_oracle, landau
from twisted_torsion.clifford import ThreeForm
from twisted_torsion.constants import LANDAU_LEVEL_FACTOR
from twisted_torsion.model_kernel import CurvatureSpectrum
from twisted_torsion.torus import FluxError, TorusModel, reference_model


def test_zero_mode_n1():
    # the lattice lifts the zero mode at order h^2
    model = reference_model(1)
    v32 = fd_oracle.finite_difference_oracle(model, 1, 32, k=4)
    v64 = fd_oracle.finite_difference_oracle(model, 1, 64, k=4)
    assert abs(v32[0]) < 5e-3
    assert abs(v32[0] / v64[0] - 4) < 0.1
    gap = 2 * 2 * math.pi
    assert np.sum(v64 < gap / 2) == 1


@pytest.mark.parametrize("p", [1, 2])
def test_level_factor_from_richardson(p):
    model = reference_model(1)
    k = p + 1
    v32 = fd_oracle.finite_difference_oracle(model, p, 32, k=k)
    v64 = fd_oracle.finite_difference_oracle(model, p, 64, k=k)
    first = (4 * v64[p] - v32[p]) / 3
    a = 2 * math.pi
    assert first / (p * a) == pytest.approx(LANDAU_LEVEL_FACTOR, rel=1e-3)


def test_n1_agreement_and_order():
    model = reference_model(1)
    exact = expand_levels(landau.landau_spectrum(model, 3, 24), 10)
    e0, e1, r = fd_oracle.refinement_ratio(model, 3, exact, grids=(32, 64), k=10)
    assert abs(r - 4) < 0.5
    assert e1 < 0.05 * exact[-1]


def test_separable_matches_full_assembly():
    model = reference_model(2)
    full = fd_oracle.finite_difference_oracle(model, 1, 6, k=12)
    sep = fd_oracle.separable_oracle(model, 1, 6, k=12)
    assert np.allclose(full, sep, atol=1e-8)


def test_assembled_operator_hermitian():
    model = reference_model(2, ThreeForm(2, {(1, 2, 3): 0.5}))
    H = fd_oracle.assemble(model, 1, 4)
    assert abs(H - H.conj().T).max() < 1e-12


def test_twisted_n2_coarse_agreement():
    model = reference_model(2, ThreeForm(2, {(1, 2, 3): 0.5}))
    exact = expand_levels(landau.landau_spectrum(model, 1, 24), 6)
    v = fd_oracle.finite_difference_oracle(model, 1, 8, k=6)
    assert np.max(np.abs(v - exact)) < 0.1 * exact[-1]


def test_guards():
    with pytest.raises(FluxError):
        fd_oracle.assemble(TorusModel(CurvatureSpectrum((math.pi,), 1.0), None), 1, 8)
    with pytest.raises(ValueError):
        fd_oracle.assemble(reference_model(3), 1, 8)
    with pytest.raises(ValueError):
        fd_oracle.assemble(reference_model(1), 1, 2)
    with pytest.raises(ValueError):
        fd_oracle.separable_oracle(reference_model(2, ThreeForm(2, {(1, 2, 3): 0.5})), 1, 8)
