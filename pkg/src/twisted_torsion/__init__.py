"""Analytic torsion of twisted Dirac operators on flat magnetic tori, in the large-p limit."""
from .model_kernel import CurvatureSpectrum, theorem1_rhs
from .clifford import ThreeForm
from .torus import TorusModel, reference_model

__all__ = ["CurvatureSpectrum", "ThreeForm", "TorusModel", "reference_model", "theorem1_rhs"]
