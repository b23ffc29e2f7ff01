"""Clifford module structure on the antiholomorphic exterior algebra.

The spinor fiber is Lambda^(0,*) C^n with basis the monomials wbar^J,
J a subset of {1..n}, ordered lexicographically as sorted tuples.  The
real orthonormal frame is tied to the unitary one by

    e_{2l-1} = (w_l + wbar_l)/sqrt(2),   e_{2l} = i (w_l - wbar_l)/sqrt(2),

which makes c(e_{2l-1}) = b_l^+ - b_l and c(e_{2l}) = i (b_l^+ + b_l),
where b_l^+ = wbar^l ^ and b_l = contraction with wbar_l.  Generators
are skew-adjoint with c(v)^2 = -|v|^2.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
import scipy.linalg

from . import _exact

MAX_N = 12


@dataclass(frozen=True)
class SpinorSpace:
    n: int
    basis: tuple = field(init=False)
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_n(self.n)
        basis = _subsets(self.n)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "index", {J: i for i, J in enumerate(basis)})

    @property
    def dim(self):
        return 2 ** self.n

    def degrees(self):
        return np.array([len(J) for J in self.basis])

    def even_mask(self):
        return self.degrees() % 2 == 0


@lru_cache(maxsize=None)
def _subsets(n):
    out = []
    for k in range(n + 1):
        out.extend(combinations(range(1, n + 1), k))
    return tuple(sorted(out))


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n < 1 or n > MAX_N:
        raise ValueError(f"complex dimension must be an integer in [1, {MAX_N}], got {n!r}")


@dataclass(frozen=True)
class CliffordElement:
    """Endomorphism of the spinor fiber together with its Z2 parity."""

    matrix: np.ndarray
    parity: str  # "even", "odd" or "mixed"
    self_adjoint: bool = False

    def __post_init__(self):
        if self.parity not in ("even", "odd", "mixed"):
            raise ValueError(f"bad parity {self.parity!r}")
        if self.self_adjoint:
            m = _exact.to_complex_array(self.matrix)
            if not np.allclose(m, m.conj().T, atol=1e-12, rtol=0):
                raise ValueError("matrix flagged self-adjoint is not Hermitian")

    @property
    def n(self):
        return int(np.log2(self.matrix.shape[0]))

    def __matmul__(self, other):
        return CliffordElement(self.matrix @ other.matrix, _combine(self.parity, other.parity))


def _combine(a, b):
    if "mixed" in (a, b):
        return "mixed"
    return "even" if a == b else "odd"


def parity_of(matrix, n):
    """Classify a fiber matrix as even, odd or mixed with respect to |J| mod 2."""
    even = SpinorSpace(n).even_mask()
    m = _exact.to_complex_array(matrix)
    off = np.abs(m[np.ix_(even, ~even)]).max(initial=0) + np.abs(m[np.ix_(~even, even)]).max(initial=0)
    diag = np.abs(m[np.ix_(even, even)]).max(initial=0) + np.abs(m[np.ix_(~even, ~even)]).max(initial=0)
    if off == 0:
        return "even"
    if diag == 0:
        return "odd"
    return "mixed"


@lru_cache(maxsize=None)
def _ladder_int(n):
    space = SpinorSpace(n)
    dim = space.dim
    pairs = []
    for l in range(1, n + 1):
        cre = np.zeros((dim, dim), dtype=int)
        for J in space.basis:
            if l in J:
                continue
            sign = (-1) ** sum(1 for m in J if m < l)
            K = tuple(sorted(J + (l,)))
            cre[space.index[K], space.index[J]] = sign
        pairs.append((cre, cre.T.copy()))
    return pairs


def ladder_operators(n, exact=False):
    """Wedge and contraction matrices (wbar^l ^, iota_{wbar_l}) for l = 1..n."""
    _check_n(n)
    conv = _exact.qqi_array if exact else (lambda a: a.astype(complex))
    return [(CliffordElement(conv(c), "odd"), CliffordElement(conv(a), "odd"))
            for c, a in _ladder_int(n)]


@lru_cache(maxsize=None)
def _generators_complex(n):
    gens = []
    for cre, ann in _ladder_int(n):
        gens.append((cre - ann).astype(complex))
        gens.append(1j * (cre + ann).astype(complex))
    return tuple(gens)


def clifford_generators(n, exact=False):
    """Matrices c(e_1), ..., c(e_2n) of the real orthonormal frame."""
    _check_n(n)
    gens = _generators_complex(n)
    if exact:
        return [_exact.qqi_array(g) for g in gens]
    return [g.copy() for g in gens]


def clifford_vector(v, n=None, exact=False):
    v = np.asarray(v)
    if n is None:
        if v.size % 2:
            raise ValueError("vector length must be even")
        n = v.size // 2
    if v.shape != (2 * n,):
        raise ValueError(f"expected a real vector of length {2 * n}, got shape {v.shape}")
    if np.iscomplexobj(v) and np.any(np.imag(v) != 0):
        raise ValueError("tangent vector must be real")
    gens = clifford_generators(n, exact)
    out = _exact.zeros(2 ** n, exact)
    for vi, g in zip(v.real if not exact else v, gens):
        if vi:
            out = out + g * (_exact.to_qqi(vi) if exact else vi)
    return CliffordElement(out, "odd")


class ThreeForm:
    """Constant real three-form on R^{2n}; coefficients keyed by 1-based i<j<k."""

    def __init__(self, n, coeffs=None):
        _check_n(n)
        self.n = n
        self.coeffs = {}
        for key, val in (coeffs or {}).items():
            i, j, k = key
            if not (1 <= i < j < k <= 2 * n):
                raise ValueError(f"three-form index {key} invalid for real dimension {2 * n}")
            val = float(val) if not isinstance(val, (int,)) else val
            if val:
                self.coeffs[(i, j, k)] = val

    @classmethod
    def zero(cls, n):
        return cls(n)

    @property
    def is_zero(self):
        return not self.coeffs

    def norm_squared(self):
        return float(sum(v * v for v in self.coeffs.values()))

    def contraction(self, i):
        """iota_{e_i} B as a dict {(a, b): coeff} with a < b."""
        out = {}
        for (a, b, c), val in self.coeffs.items():
            if i == a:
                out[(b, c)] = out.get((b, c), 0) + val
            elif i == b:
                out[(a, c)] = out.get((a, c), 0) - val
            elif i == c:
                out[(a, b)] = out.get((a, b), 0) + val
        return out

    def to_list(self):
        return [[i, j, k, v] for (i, j, k), v in sorted(self.coeffs.items())]

    def __repr__(self):
        return f"ThreeForm(n={self.n}, coeffs={self.coeffs})"

    def __eq__(self, other):
        return isinstance(other, ThreeForm) and self.n == other.n and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.n, tuple(sorted(self.coeffs.items()))))


def _coef(val, exact):
    return _exact.to_qqi(val) if exact else val


def clifford_three_form(B, exact=False):
    """c(B) = sum_{i<j<k} B_ijk c(e_i) c(e_j) c(e_k); checked self-adjoint."""
    n = B.n
    gens = clifford_generators(n, exact)
    out = _exact.zeros(2 ** n, exact)
    for (i, j, k), val in sorted(B.coeffs.items()):
        out = out + (gens[i - 1] @ gens[j - 1] @ gens[k - 1]) * _coef(val, exact)
    m = _exact.to_complex_array(out)
    if not np.allclose(m, m.conj().T, atol=1e-12, rtol=0):
        raise AssertionError("c(B) failed the self-adjointness check")
    return CliffordElement(out, "odd", self_adjoint=True)


def clifford_two_form(omega, n, exact=False):
    """c(omega) = sum_{a<b} omega_ab c(e_a) c(e_b) for a dict {(a, b): coeff}."""
    gens = clifford_generators(n, exact)
    out = _exact.zeros(2 ** n, exact)
    for (a, b), val in sorted(omega.items()):
        if val:
            out = out + (gens[a - 1] @ gens[b - 1]) * _coef(val, exact)
    return CliffordElement(out, "even")


def contracted_three_form(B, i, exact=False):
    """c(iota_{e_i} B), the constant spin-connection shift in direction i."""
    return clifford_two_form(B.contraction(i), B.n, exact)


def _positive(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("curvature spectrum must be a nonempty 1-d sequence")
    if np.any(a <= 0):
        raise ValueError("curvature eigenvalues must be strictly positive")
    return a


def omega_d_diagonal(a):
    a = _positive(a)
    space = SpinorSpace(len(a))
    return np.array([-sum(a[l - 1] for l in J) for J in space.basis])


def omega_d(a):
    """omega_d acting diagonally: wbar^J -> -(sum_{l in J} a_l) wbar^J."""
    return CliffordElement(np.diag(omega_d_diagonal(a)).astype(complex), "even")


def number_operator(n):
    return np.diag(SpinorSpace(n).degrees()).astype(complex)


def parity_operator(n):
    return np.diag((-1.0) ** SpinorSpace(n).degrees()).astype(complex)


def _matrix(A):
    return A.matrix if isinstance(A, CliffordElement) else np.asarray(A)


def supertrace(A):
    m = _matrix(A)
    n = int(round(np.log2(m.shape[0])))
    signs = (-1) ** SpinorSpace(n).degrees()
    return sum(int(s) * m[i, i] for i, s in enumerate(signs))


def number_weighted_supertrace(A):
    m = _matrix(A)
    n = int(round(np.log2(m.shape[0])))
    degs = SpinorSpace(n).degrees()
    return sum(int((-1) ** q * q) * m[i, i] for i, q in enumerate(degs) if q)


def exp_diagonal(A, u):
    """exp(u A) for a diagonal element, by exponentiating the diagonal."""
    m = _exact.to_complex_array(_matrix(A))
    d = np.diag(m)
    if not np.allclose(m, np.diag(d), atol=0):
        raise ValueError("exp_diagonal needs a diagonal element")
    return np.diag(np.exp(u * d))


def exp_element(A, u=1.0):
    """exp(u A) via eigendecomposition of the Hermitian or skew-Hermitian element."""
    m = _exact.to_complex_array(_matrix(A)) * u
    if np.allclose(m, m.conj().T, atol=1e-12):
        w, v = np.linalg.eigh((m + m.conj().T) / 2)
        return (v * np.exp(w)) @ v.conj().T
    if np.allclose(m, -m.conj().T, atol=1e-12):
        w, v = np.linalg.eigh((m - m.conj().T) / 2j)
        return (v * np.exp(1j * w)) @ v.conj().T
    return scipy.linalg.expm(m)
