"""Flat complex torus with a constant-curvature line bundle and constant three-form."""
import math
from dataclasses import dataclass

import numpy as np

from . import clifford
from .clifford import ThreeForm
from .model_kernel import CurvatureSpectrum


class FluxError(ValueError):
    pass


@dataclass(frozen=True)
class TorusModel:
    spec: CurvatureSpectrum
    B: ThreeForm = None

    def __post_init__(self):
        B = self.B if self.B is not None else ThreeForm.zero(self.spec.n)
        if B.n != self.spec.n:
            raise ValueError("three-form and curvature spectrum disagree on n")
        object.__setattr__(self, "B", B)
        flux = self.spec.flux()
        if abs(flux - round(flux)) > 1e-9 or round(flux) < 1:
            # only p-multiples of the flux must be integers; integral flux is the default setup
            if not _rational_enough(flux):
                raise FluxError(f"flux {flux!r} is not a positive rational with small denominator")

    @property
    def n(self):
        return self.spec.n

    @property
    def rank_e(self):
        return self.spec.rank_e

    def degeneracy(self, p):
        """d_p = rank_e p^n flux; raises when it is not an integer."""
        d = self.spec.rank_e * p ** self.n * self.spec.flux()
        if abs(d - round(d)) > 1e-8 or round(d) < 1:
            raise FluxError(f"d_p = {d!r} is not a positive integer at p = {p}")
        return int(round(d))

    def side_lengths(self):
        """Side L of each square two-torus factor, with vol = prod L^2."""
        L = self.spec.vol ** (1.0 / (2 * self.n))
        return [L] * self.n

    def cB(self):
        return clifford.clifford_three_form(self.B).matrix

    def cB_norm(self):
        if self.B.is_zero:
            return 0.0
        return float(np.linalg.norm(self.cB(), 2))

    def gap_threshold(self):
        """Smallest p for which the kernel of the twisted operator provably has index size.

        The lowest nonzero |eigenvalue| of the untwisted operator is
        sqrt(2 p a_min); when it exceeds 2 ||c(B)|| the perturbed kernel
        cluster cannot mix with the first excited level.
        """
        nb = self.cB_norm()
        if nb == 0:
            return 1
        amin = min(self.spec.a)
        return max(1, math.floor(4 * nb * nb / (2 * amin)) + 1)

    def to_dict(self):
        return {
            "n": self.n,
            "curvature": list(self.spec.a),
            "volume": self.spec.vol,
            "rank_e": self.spec.rank_e,
            "three_form": self.B.to_list(),
        }

    @classmethod
    def from_dict(cls, d):
        n = int(d["n"])
        a = d["curvature"]
        if len(a) != n:
            raise ValueError("curvature list length must equal n")
        spec = CurvatureSpectrum(tuple(float(x) for x in a), float(d.get("volume", 1.0)), int(d.get("rank_e", 1)))
        coeffs = {}
        for entry in d.get("three_form", []):
            i, j, k, v = entry
            coeffs[(int(i), int(j), int(k))] = float(v)
        return cls(spec, ThreeForm(n, coeffs))


def _rational_enough(x, max_den=10_000):
    from fractions import Fraction
    f = Fraction(x).limit_denominator(max_den)
    return f > 0 and abs(float(f) - x) < 1e-9


def reference_model(n=1, B=None):
    """a_j = 2 pi, vol = 1, rank 1: unit flux per complex direction."""
    spec = CurvatureSpectrum(tuple([2 * math.pi] * n), 1.0, 1)
    return TorusModel(spec, B if B is not None else ThreeForm.zero(n))
