"""Gaussian-rational helpers used by the exact code paths.

Matrices in exact mode are numpy object arrays whose entries are
``QQ_I`` elements from sympy's polys domains.  Everything else in the
package works with ``complex128``.
"""
from fractions import Fraction
from numbers import Rational

import numpy as np
from sympy.polys.domains import QQ_I

ZERO = QQ_I(0)
ONE = QQ_I(1)


def to_qqi(value):
    """Convert an int, Fraction, exactly representable float or complex to QQ_I."""
    if isinstance(value, type(ZERO)):
        return value
    if isinstance(value, complex):
        return QQ_I(Fraction(value.real), Fraction(value.imag))
    if isinstance(value, (Rational, float)):
        return QQ_I(Fraction(value), 0)
    raise TypeError(f"cannot convert {value!r} to a Gaussian rational")


def qqi_array(arr):
    """Object array of QQ_I from any numeric array with exactly representable entries."""
    arr = np.asarray(arr)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        if isinstance(v, (np.complexfloating, complex)):
            v = complex(v)
        elif isinstance(v, np.floating):
            v = float(v)
        elif isinstance(v, np.integer):
            v = int(v)
        out[idx] = to_qqi(v)
    return out


def qqi_to_complex(x):
    return complex(float(x.x), float(x.y))


def to_complex_array(arr):
    arr = np.asarray(arr)
    if arr.dtype != object:
        return arr.astype(complex)
    out = np.empty(arr.shape, dtype=complex)
    for idx, v in np.ndenumerate(arr):
        out[idx] = qqi_to_complex(v) if isinstance(v, type(ZERO)) else complex(v)
    return out


def qqi_to_fraction_pair(x):
    return (Fraction(int(x.x.numerator), int(x.x.denominator)),
            Fraction(int(x.y.numerator), int(x.y.denominator)))


def is_zero_matrix(mat, atol=0.0):
    if mat.dtype == object:
        return not any(bool(v) for v in mat.flat)
    if atol == 0.0:
        return not np.any(mat)
    return bool(np.max(np.abs(mat)) <= atol)


def identity(dim, exact):
    if exact:
        out = np.full((dim, dim), ZERO, dtype=object)
        for i in range(dim):
            out[i, i] = ONE
        return out
    return np.eye(dim, dtype=complex)


def zeros(dim, exact):
    if exact:
        return np.full((dim, dim), ZERO, dtype=object)
    return np.zeros((dim, dim), dtype=complex)


def scalar(value, exact):
    return to_qqi(value) if exact else complex(value)
