"""Formal differential operators with the p-grading, and the heat parametrix.

An operator is a finite sum of terms  a p^l x^I d^J  (x to the left of
d), with a a matrix on the model fiber.  The p-grading gives x degree -1,
p degree 2 and d degree 1, so a term has degree 2l - |I| + |J|.

Coefficients are either complex128 arrays or, in exact mode, object
arrays of Gaussian rationals.
"""
import math
from functools import lru_cache
from itertools import product

import numpy as np

from . import _exact, clifford

NEG_INF = float("-inf")
PRUNE_TOL = 1e-13


def _zero_multi(dim):
    return (0,) * dim


def _unit(dim, i):
    return tuple(1 if k == i else 0 for k in range(dim))


def _add(I, K):
    return tuple(a + b for a, b in zip(I, K))


def _is_negligible(mat):
    if mat.dtype == object:
        return _exact.is_zero_matrix(mat)
    return _exact.is_zero_matrix(mat, PRUNE_TOL)


def _fmt_entry(v):
    if isinstance(v, type(_exact.ZERO)):
        re, im = _exact.qqi_to_fraction_pair(v)
        if im == 0:
            return str(re)
        if re == 0:
            return f"{im}i"
        return f"{re}{'+' if im > 0 else '-'}{abs(im)}i"
    v = complex(v)
    re = 0.0 if abs(v.real) < 1e-14 else v.real
    im = 0.0 if abs(v.imag) < 1e-14 else v.imag
    if im == 0:
        return f"{re:.12g}"
    if re == 0:
        return f"{im:.12g}i"
    return f"{re:.12g}{im:+.12g}i"


def format_matrix(mat):
    return "[" + "; ".join(" ".join(_fmt_entry(v) for v in row) for row in mat) + "]"


@lru_cache(maxsize=None)
def _leibniz(J, K):
    """d^J x^K = sum over M of coeff * x^{K-M} d^{J-M}; returns [(coeff, K-M, J-M)]."""
    ranges = [range(min(j, k) + 1) for j, k in zip(J, K)]
    out = []
    for M in product(*ranges):
        c = 1
        for j, k, m in zip(J, K, M):
            c *= math.comb(j, m) * math.factorial(k) // math.factorial(k - m)
        out.append((c, tuple(k - m for k, m in zip(K, M)), tuple(j - m for j, m in zip(J, M))))
    return out


class SymbolicOperator:
    """Normalized sum of terms keyed by (l, I, J)."""

    def __init__(self, dim, fiber, terms=None, exact=False):
        self.dim = dim
        self.fiber = fiber
        self.exact = exact
        self.terms = {}
        for key, mat in (terms or {}).items():
            self._accumulate(key, mat)
        self._prune()

    def _accumulate(self, key, mat):
        if key in self.terms:
            self.terms[key] = self.terms[key] + mat
        else:
            self.terms[key] = mat

    def _prune(self):
        self.terms = {k: v for k, v in sorted(self.terms.items()) if not _is_negligible(v)}

    def _new(self, terms):
        return SymbolicOperator(self.dim, self.fiber, terms, self.exact)

    # constructors
    @classmethod
    def zero(cls, dim, fiber, exact=False):
        return cls(dim, fiber, {}, exact)

    @classmethod
    def constant(cls, dim, matrix, l=0, exact=False):
        fiber = matrix.shape[0]
        return cls(dim, fiber, {(l, _zero_multi(dim), _zero_multi(dim)): matrix}, exact)

    @classmethod
    def identity(cls, dim, fiber, exact=False):
        return cls.constant(dim, _exact.identity(fiber, exact), exact=exact)

    @classmethod
    def monomial(cls, dim, fiber, l=0, I=None, J=None, coeff=None, exact=False):
        I = I if I is not None else _zero_multi(dim)
        J = J if J is not None else _zero_multi(dim)
        mat = coeff if coeff is not None else _exact.identity(fiber, exact)
        return cls(dim, fiber, {(l, tuple(I), tuple(J)): mat}, exact)

    @classmethod
    def x(cls, dim, fiber, i, exact=False):
        return cls.monomial(dim, fiber, I=_unit(dim, i), exact=exact)

    @classmethod
    def d(cls, dim, fiber, i, exact=False):
        return cls.monomial(dim, fiber, J=_unit(dim, i), exact=exact)

    # algebra
    def _check(self, other):
        if (self.dim, self.fiber) != (other.dim, other.fiber):
            raise ValueError("operators act on different coordinate spaces or fibers")
        if self.exact != other.exact:
            raise ValueError("cannot mix exact and floating operators")

    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out[k] + v if k in out else v
        return self._new(out)

    def __neg__(self):
        return self._new({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        c = _exact.scalar(c, self.exact) if not isinstance(c, type(_exact.ZERO)) else c
        return self._new({k: v * c for k, v in self.terms.items()})

    def left_multiply(self, matrix):
        return self._new({k: matrix @ v for k, v in self.terms.items()})

    def compose(self, other, max_x_degree=None):
        """self o other via d_i x_i = x_i d_i + 1."""
        self._check(other)
        out = {}
        for (l, I, J), a in self.terms.items():
            for (m, K, L), b in other.terms.items():
                ab = a @ b
                for c, Kr, Jr in _leibniz(J, K):
                    xi = _add(I, Kr)
                    if max_x_degree is not None and sum(xi) > max_x_degree:
                        continue
                    key = (l + m, xi, _add(Jr, L))
                    val = ab * c if c != 1 else ab
                    out[key] = out[key] + val if key in out else val
        return self._new(out)

    __matmul__ = compose

    def truncate(self, max_x_degree):
        return self._new({k: v for k, v in self.terms.items() if sum(k[1]) <= max_x_degree})

    # grading
    @staticmethod
    def term_degree(key):
        l, I, J = key
        return 2 * l - sum(I) + sum(J)

    def degree(self):
        if not self.terms:
            return NEG_INF
        return max(self.term_degree(k) for k in self.terms)

    def max_degree_part(self):
        if not self.terms:
            raise ValueError("the zero operator has no maximal-degree part")
        deg = self.degree()
        return self._new({k: v for k, v in self.terms.items() if self.term_degree(k) == deg})

    def is_zero(self):
        return not self.terms

    def equals(self, other, atol=0.0):
        self._check(other)
        diff = self - other
        if self.exact:
            return diff.is_zero()
        return all(_exact.is_zero_matrix(v, atol) for v in diff.terms.values())

    def order_part(self, order):
        """Terms with |J| == order."""
        return self._new({k: v for k, v in self.terms.items() if sum(k[2]) == order})

    def to_complex(self):
        if not self.exact:
            return self
        return SymbolicOperator(self.dim, self.fiber,
                                {k: _exact.to_complex_array(v) for k, v in self.terms.items()}, False)

    def canonical_text(self):
        lines = []
        for key in sorted(self.terms):
            l, I, J = key
            lines.append(f"p^{l} x^{I} d^{J} [deg {self.term_degree(key)}] : {format_matrix(self.terms[key])}")
        return "\n".join(lines) if lines else "0"

    def __repr__(self):
        return f"SymbolicOperator(dim={self.dim}, fiber={self.fiber}, terms={len(self.terms)}, degree={self.degree()})"

    def apply(self, section, max_x_degree=None):
        """(self applied to the matrix-valued polynomial section)."""
        out = {}
        for (l, I, J), a in self.terms.items():
            for (m, K), b in section.terms.items():
                if any(k < j for k, j in zip(K, J)):
                    continue
                xi = tuple(i + k - j for i, k, j in zip(I, K, J))
                if max_x_degree is not None and sum(xi) > max_x_degree:
                    continue
                c = 1
                for k, j in zip(K, J):
                    c *= math.factorial(k) // math.factorial(k - j)
                key = (l + m, xi)
                val = a @ b
                if c != 1:
                    val = val * c
                out[key] = out[key] + val if key in out else val
        return PolySection(self.dim, self.fiber, out, self.exact)


class PolySection:
    """Matrix-valued polynomial in x with an extra formal p-power per monomial."""

    def __init__(self, dim, fiber, terms=None, exact=False):
        self.dim = dim
        self.fiber = fiber
        self.exact = exact
        self.terms = {}
        for k, v in (terms or {}).items():
            self.terms[k] = self.terms[k] + v if k in self.terms else v
        self.terms = {k: v for k, v in sorted(self.terms.items()) if not _is_negligible(v)}

    @classmethod
    def constant(cls, dim, matrix, exact=False):
        return cls(dim, matrix.shape[0], {(0, _zero_multi(dim)): matrix}, exact)

    def _new(self, terms):
        return PolySection(self.dim, self.fiber, terms, self.exact)

    def __add__(self, other):
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out[k] + v if k in out else v
        return self._new(out)

    def __neg__(self):
        return self._new({k: -v for k, v in self.terms.items()})

    def multiply(self, other, max_x_degree=None):
        """Pointwise product self * other (matrix product of coefficients)."""
        out = {}
        for (l, I), a in self.terms.items():
            for (m, K), b in other.terms.items():
                xi = _add(I, K)
                if max_x_degree is not None and sum(xi) > max_x_degree:
                    continue
                key = (l + m, xi)
                val = a @ b
                out[key] = out[key] + val if key in out else val
        return self._new(out)

    def homogeneous(self, m):
        return self._new({k: v for k, v in self.terms.items() if sum(k[1]) == m})

    def max_x_degree(self):
        return max((sum(k[1]) for k in self.terms), default=-1)

    def degree(self):
        if not self.terms:
            return NEG_INF
        return max(2 * l - sum(I) for l, I in self.terms)

    def at_origin(self):
        """{p-power: matrix} of the constant coefficient."""
        zero = _zero_multi(self.dim)
        return {l: v for (l, I), v in self.terms.items() if I == zero}

    def is_zero(self):
        return not self.terms

    def canonical_text(self):
        lines = [f"p^{l} x^{I} [deg {2 * l - sum(I)}] : {format_matrix(v)}" for (l, I), v in sorted(self.terms.items())]
        return "\n".join(lines) if lines else "0"


def max_p_power_at_origin(theta):
    origin = theta.at_origin()
    return max(origin, default=-1)


# ---------------------------------------------------------------- assembly

def curvature_matrix(a, exact=False):
    """Real-coordinate curvature R_ij: R_{2l-1,2l} = -i a_l (so i R is positive)."""
    n = len(a)
    dim = 2 * n
    if exact:
        R = np.full((dim, dim), _exact.ZERO, dtype=object)
        for l, al in enumerate(a):
            R[2 * l, 2 * l + 1] = _exact.to_qqi(complex(0, 0)) - _exact.QQ_I(0, 1) * _exact.to_qqi(al)
            R[2 * l + 1, 2 * l] = _exact.QQ_I(0, 1) * _exact.to_qqi(al)
    else:
        R = np.zeros((dim, dim), dtype=complex)
        for l, al in enumerate(a):
            R[2 * l, 2 * l + 1] = -1j * al
            R[2 * l + 1, 2 * l] = 1j * al
    return R


def clifford_curvature(a, exact=False):
    """c(R^L) = (1/2) sum_ij R_ij c(e_i) c(e_j)."""
    n = len(a)
    gens = clifford.clifford_generators(n, exact)
    R = curvature_matrix(a, exact)
    out = _exact.zeros(2 ** n, exact)
    for i in range(2 * n):
        for j in range(2 * n):
            if R[i, j]:
                out = out + (gens[i] @ gens[j]) * R[i, j]
    half = _exact.QQ_I(1, 0) / 2 if exact else 0.5
    return out * half


def _curvature_values(model, exact):
    if exact:
        from fractions import Fraction
        return [Fraction(x) for x in model.spec.a]
    return [float(x) for x in model.spec.a]


def covariant_derivatives(model, exact=False, twisted=True):
    """nabla_i = d_i + p Gamma_i (+ c(iota_{e_i} B)) in synchronous gauge Gamma_i = -(1/2) R_ij x_j."""
    n = model.n
    dim, fiber = 2 * n, 2 ** n
    a = _curvature_values(model, exact)
    R = curvature_matrix(a, exact)
    half = _exact.QQ_I(1, 0) / 2 if exact else 0.5
    eye = _exact.identity(fiber, exact)
    out = []
    for i in range(dim):
        op = SymbolicOperator.d(dim, fiber, i, exact)
        for j in range(dim):
            if R[i, j]:
                op = op + SymbolicOperator.monomial(dim, fiber, l=1, I=_unit(dim, j),
                                                    coeff=eye * (-half * R[i, j]), exact=exact)
        if twisted and not model.B.is_zero:
            A = clifford.contracted_three_form(model.B, i + 1, exact).matrix
            op = op + SymbolicOperator.constant(dim, A, exact=exact)
        out.append(op)
    return out


def assemble_dirac(model, exact=False):
    """D_p + c(B) = sum_i c(e_i) (d_i + p Gamma_i) + c(B)."""
    n = model.n
    gens = clifford.clifford_generators(n, exact)
    nablas = covariant_derivatives(model, exact, twisted=False)
    dim, fiber = 2 * n, 2 ** n
    op = SymbolicOperator.zero(dim, fiber, exact)
    for g, nab in zip(gens, nablas):
        op = op + nab.left_multiply(g)
    if not model.B.is_zero:
        op = op + SymbolicOperator.constant(dim, clifford.clifford_three_form(model.B, exact).matrix, exact=exact)
    return op


def assemble_dirac_squared(model, exact=False):
    """The square of the twisted Dirac operator, by symbolic composition."""
    D = assemble_dirac(model, exact)
    op = D.compose(D)
    if op.degree() != 2:
        raise AssertionError(f"assembled square has degree {op.degree()}, expected 2")
    return op


def twist_potential(model, exact=False):
    """c(B)^2 + sum_i c(iota_{e_i} B)^2, the zeroth-order remainder of the twisted Bochner form."""
    n = model.n
    cB = clifford.clifford_three_form(model.B, exact).matrix
    V = cB @ cB
    for i in range(2 * n):
        A = clifford.contracted_three_form(model.B, i + 1, exact).matrix
        V = V + A @ A
    return V


def assemble_bochner_form(model, exact=False, zeroth_order=None):
    """-sum_i (nabla_i + c(iota_i B))^2 + p c(R^L) + V.

    ``zeroth_order`` defaults to twist_potential(model), which makes this
    identical to assemble_dirac_squared.  Passing -|B|^2 Id gives the
    literal published form.
    """
    n = model.n
    dim, fiber = 2 * n, 2 ** n
    nablas = covariant_derivatives(model, exact, twisted=True)
    op = SymbolicOperator.zero(dim, fiber, exact)
    for nab in nablas:
        op = op - nab.compose(nab)
    cR = clifford_curvature(_curvature_values(model, exact), exact)
    op = op + SymbolicOperator.constant(dim, cR, l=1, exact=exact)
    V = twist_potential(model, exact) if zeroth_order is None else zeroth_order
    return op + SymbolicOperator.constant(dim, V, exact=exact)


def b_free_max_part(model, exact=False):
    """True when the top-degree part of the twisted square equals the untwisted model operator."""
    from .torus import TorusModel
    full = assemble_dirac_squared(model, exact).max_degree_part()
    bare = assemble_dirac_squared(TorusModel(model.spec, None), exact)
    return full.equals(bare, atol=1e-12)


# ---------------------------------------------------------------- parametrix

class NonFlatOperator(ValueError):
    pass


def _radial_connection(op):
    """x . A(x) where the first-order part of op is -2 sum_i A_i d_i."""
    dim, fiber, exact = op.dim, op.fiber, op.exact
    second = op.order_part(2)
    lap = SymbolicOperator.zero(dim, fiber, exact)
    for i in range(dim):
        J = tuple(2 if k == i else 0 for k in range(dim))
        lap = lap + SymbolicOperator.monomial(dim, fiber, J=J, exact=exact)
    if not second.equals(-lap, atol=1e-12):
        raise NonFlatOperator("principal part is not the flat Laplacian -sum d_i^2")
    if any(sum(k[2]) > 2 for k in op.terms):
        raise NonFlatOperator("operator has order above two")
    half = _exact.QQ_I(1, 0) / 2 if exact else 0.5
    X = {}
    for (l, I, J), v in op.order_part(1).terms.items():
        i = J.index(1)
        key = (l, _add(I, _unit(dim, i)))
        val = v * (-half)
        X[key] = X[key] + val if key in X else val
    return PolySection(dim, fiber, X, exact)


def parametrix_coefficients(op, jmax, max_x_degree=None):
    """Theta_0..Theta_jmax of the heat parametrix of a flat second-order operator.

    Solves (x.nabla + j) Theta_j = -op Theta_{j-1} with Theta_0(0) = Id.
    In synchronous gauge (x . A = 0) this is the radial integral
    Theta_j(x) = -int_0^1 s^{j-1} (op Theta_{j-1})(s x) ds and every
    Theta_j is a finite polynomial.  Otherwise the transport factor is a
    power series and each Theta_j is kept to x-degree 2 (jmax - j), which
    is what the values at the origin need.
    """
    if not (0 <= jmax <= 4):
        raise ValueError("jmax must lie in [0, 4]")
    return _parametrix(op, jmax, max_x_degree)


def _parametrix(op, jmax, max_x_degree=None):
    dim, fiber, exact = op.dim, op.fiber, op.exact
    X = _radial_connection(op)
    synchronous = X.is_zero()
    if max_x_degree is None and not synchronous:
        max_x_degree = 2 * jmax
    limits = [None if max_x_degree is None else max(max_x_degree - 2 * j, 0) for j in range(jmax + 1)]
    eye = _exact.identity(fiber, exact)

    def solve(rhs, j, limit):
        # homogeneous components: (m + j) T_m = rhs_m - (X T)_m
        top = rhs.max_x_degree() if limit is None else limit
        comps = {}
        for m in range(0, top + 1):
            acc = rhs.homogeneous(m)
            if not synchronous:
                for k in range(1, m + 1):
                    if (m - k) in comps:
                        acc = acc + (-(X.homogeneous(k).multiply(comps[m - k])))
            if m + j == 0:
                continue
            comps[m] = _divide(acc, m + j, exact)
        out = PolySection(dim, fiber, {}, exact)
        for part in comps.values():
            out = out + part
        return out

    theta0_rhs = PolySection.constant(dim, eye, exact)
    if synchronous:
        thetas = [theta0_rhs]
    else:
        comps = {0: theta0_rhs}
        for m in range(1, limits[0] + 1):
            acc = PolySection(dim, fiber, {}, exact)
            for k in range(1, m + 1):
                acc = acc + (-(X.homogeneous(k).multiply(comps[m - k])))
            comps[m] = _divide(acc, m, exact)
        total = PolySection(dim, fiber, {}, exact)
        for part in comps.values():
            total = total + part
        thetas = [total]
    for j in range(1, jmax + 1):
        rhs = -op.apply(thetas[-1], max_x_degree=limits[j])
        thetas.append(solve(rhs, j, limits[j]))
    return thetas


def _divide(section, k, exact):
    if exact:
        inv = _exact.QQ_I(1, 0) / k
        return PolySection(section.dim, section.fiber, {key: v * inv for key, v in section.terms.items()}, True)
    return PolySection(section.dim, section.fiber, {key: v / k for key, v in section.terms.items()}, False)


def parametrix_extended(op, jmax):
    """Same recurrence without the jmax <= 4 guard; floating-point use only."""
    if op.exact and jmax > 4:
        raise ValueError("exact parametrix is limited to jmax <= 4")
    return _parametrix(op, jmax)


def degree_audit(thetas):
    """Rows (j, deg Theta_j, max p-power at origin, pass)."""
    rows = []
    for j, th in enumerate(thetas):
        deg = th.degree()
        pmax = max_p_power_at_origin(th)
        rows.append((j, deg, pmax, deg <= 2 * j and pmax <= j))
    return rows
