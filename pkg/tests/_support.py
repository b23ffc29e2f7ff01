"""Shared helpers for the test modules."""
import numpy as np

from twisted_torsion import _exact
from twisted_torsion.pgrading import SymbolicOperator


def random_exact_operator(rng, dim=2, fiber=2, nterms=3, max_l=2, max_pow=2):
    """Random operator with Gaussian-integer coefficients and small multi-indices."""
    terms = {}
    for _ in range(nterms):
        l = int(rng.integers(0, max_l + 1))
        I = tuple(int(v) for v in rng.integers(0, max_pow + 1, size=dim))
        J = tuple(int(v) for v in rng.integers(0, max_pow + 1, size=dim))
        re = rng.integers(-3, 4, size=(fiber, fiber))
        im = rng.integers(-3, 4, size=(fiber, fiber))
        terms[(l, I, J)] = _exact.qqi_array(re + 1j * im)
    return SymbolicOperator(dim, fiber, terms, exact=True)


def expand_levels(data, k):
    """Lowest k eigenvalues of a SpectralData repeated by total multiplicity."""
    out = []
    for lam, mult in data.entries:
        out.extend([lam] * int(round(sum(mult))))
        if len(out) >= k:
            break
    return np.array(out[:k])
