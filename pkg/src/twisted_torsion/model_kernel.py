"""Closed-form local model for the rescaled heat supertrace.

For constant curvature eigenvalues a_1..a_n the rescaled diagonal heat
density is

    str(N e^{u omega_d}) det(a/2pi) / prod_j (1 - e^{-u a_j}),

which also equals det(a/2pi) sum_j -e^{-u a_j}/(1 - e^{-u a_j}).  Its
Mellin transform factors through the Riemann zeta function, giving the
auxiliary zeta function zeta_hat and its derivative at zero.
"""
import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np
from scipy import integrate, special

from . import clifford
from .constants import EULER_GAMMA, ZETA_AT_ZERO, ZETA_PRIME_AT_ZERO

GAMMA_PRIME_ONE = -EULER_GAMMA


@dataclass(frozen=True)
class CurvatureSpectrum:
    a: tuple
    vol: float = 1.0
    rank_e: int = 1

    def __post_init__(self):
        a = tuple(self.a)
        if not a:
            raise ValueError("curvature spectrum needs at least one eigenvalue")
        if any(not (x > 0) for x in a):
            raise ValueError("curvature eigenvalues must be strictly positive")
        if not (self.vol > 0):
            raise ValueError("volume must be positive")
        if int(self.rank_e) != self.rank_e or self.rank_e < 1:
            raise ValueError("rank_e must be a positive integer")
        object.__setattr__(self, "a", a)

    @property
    def n(self):
        return len(self.a)

    def det_normalized(self):
        """det(Rdot^L / 2 pi)."""
        return math.prod(x / (2 * math.pi) for x in self.a)

    def flux(self):
        """Integral of omega^n / n! over the torus."""
        return self.det_normalized() * self.vol


@dataclass(frozen=True)
class LaurentCoeffs:
    alpha_minus1: float
    alpha_0: float


def _check_u(u):
    if not (u > 0):
        raise ValueError(f"u must be positive, got {u!r}")


def local_density(u, spec):
    _check_u(u)
    a = np.array(spec.a, dtype=float)
    diag = np.exp(u * clifford.omega_d_diagonal(a))
    str_n = clifford.number_weighted_supertrace(np.diag(diag)).real
    return str_n * spec.det_normalized() / np.prod(-np.expm1(-u * a))


def trace_form(u, spec):
    _check_u(u)
    a = np.array(spec.a, dtype=float)
    return spec.det_normalized() * float(np.sum(-1.0 / np.expm1(u * a)))


def regular_part(x):
    """-1/(e^x - 1) + 1/x - 1/2, evaluated without cancellation for small x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.05
    out = np.empty_like(x)
    xs = x[small]
    x2 = xs * xs
    out[small] = -xs * (1 / 12 - x2 * (1 / 720 - x2 * (1 / 30240 - x2 / 1209600)))
    xl = x[~small]
    out[~small] = -1.0 / np.expm1(xl) + 1.0 / xl - 0.5
    return out if out.ndim else float(out)


def laurent_coeffs(spec):
    det = spec.det_normalized()
    return LaurentCoeffs(
        alpha_minus1=-det * sum(1.0 / x for x in spec.a) * spec.vol,
        alpha_0=0.5 * spec.n * det * spec.vol,
    )


def laurent_remainder(u, spec):
    """vol * local_density(u) - alpha_-1/u - alpha_0, evaluated stably."""
    a = np.array(spec.a, dtype=float)
    return spec.vol * spec.det_normalized() * float(np.sum(regular_part(u * a)))


def _inverse_g_series(order):
    # (1 - e^{-x})/x = sum_k (-1)^k x^k/(k+1)!
    return [Fraction((-1) ** k, math.factorial(k + 1)) for k in range(order + 1)]


def _series_inverse(c, order):
    out = [Fraction(0)] * (order + 1)
    out[0] = 1 / c[0]
    for k in range(1, order + 1):
        out[k] = -sum(c[i] * out[k - i] for i in range(1, k + 1)) / c[0]
    return out


def _series_mul(x, y, order):
    return [sum(x[i] * y[k - i] for i in range(k + 1)) for k in range(order + 1)]


def g_series(order):
    """Taylor coefficients of x / (1 - e^{-x}) as exact fractions."""
    return _series_inverse(_inverse_g_series(order), order)


def kappa_coefficients(spec, jmax, exact=False):
    """kappa_0..kappa_jmax with e^{u omega_d} det(a)/det(1-e^{-ua}) = sum u^{j-n} kappa_j / 2^j.

    With ``exact=True`` every a_j must be rational and the diagonal
    matrices hold Fractions.
    """
    if not (0 <= jmax <= 8):
        raise ValueError("jmax must lie in [0, 8]")
    if exact:
        a = [Fraction(x) for x in spec.a]
    else:
        a = [float(x) for x in spec.a]
    g = g_series(jmax)
    scal = [Fraction(1)] + [Fraction(0)] * jmax
    for aj in a:
        factor = [g[k] * aj ** k for k in range(jmax + 1)]
        scal = _series_mul(scal, factor, jmax)
    space = clifford.SpinorSpace(spec.n)
    wd = [-sum(a[l - 1] for l in J) for J in space.basis]
    kappas = []
    for j in range(jmax + 1):
        diag = []
        for w in wd:
            tot = sum(scal[j - m] * w ** m / math.factorial(m) for m in range(j + 1))
            diag.append(tot * 2 ** j)
        if exact:
            mat = np.full((space.dim, space.dim), Fraction(0), dtype=object)
            for i, d in enumerate(diag):
                mat[i, i] = Fraction(d)
        else:
            mat = np.diag(np.array([float(d) for d in diag])).astype(complex)
        kappas.append(mat)
    return kappas


def kappa_series_density(u, spec, jmax):
    """(2 pi)^-n sum_j u^{j-n} str_N(kappa_j)/2^j, the truncated model series."""
    ks = kappa_coefficients(spec, jmax)
    tot = sum(u ** (j - spec.n) * clifford.number_weighted_supertrace(k).real / 2 ** j
              for j, k in enumerate(ks))
    return tot / (2 * math.pi) ** spec.n


class UnsupportedDomain(ValueError):
    pass


def riemann_zeta_mellin(z):
    """(1/Gamma(z)) int_0^inf u^{z-1} e^{-u}/(1-e^{-u}) du.

    Direct quadrature for Re z > 1; z = 0 returns the stored value -1/2.
    """
    z = complex(z)
    if z == 0:
        return complex(ZETA_AT_ZERO)
    if z.real <= 1:
        raise UnsupportedDomain(f"Mellin integral only converges for Re z > 1, got {z}")

    def integrand(u, part):
        if u == 0.0:
            return 0.0
        val = np.exp((z - 1) * np.log(u)) / np.expm1(u)
        return val.real if part == 0 else val.imag

    tot = 0j
    for part in (0, 1):
        if part == 1 and z.imag == 0:
            continue
        pieces = 0.0
        for lo, hi in ((0.0, 1.0), (1.0, 40.0), (40.0, np.inf)):
            val, _ = integrate.quad(integrand, lo, hi, args=(part,), epsabs=1e-13, epsrel=1e-12, limit=200)
            pieces += val
        tot += pieces if part == 0 else 1j * pieces
    return tot / special.gamma(z)


def zeta_prime_zero():
    return ZETA_PRIME_AT_ZERO


def riemann_zeta(z):
    """Riemann zeta on the real line, by Mellin quadrature where it converges."""
    if z > 1:
        return riemann_zeta_mellin(z).real
    if z == 0:
        return ZETA_AT_ZERO
    return float(mpmath.zeta(z))


def zeta_hat(z, spec):
    """det(a/2pi) vol sum_j a_j^{-z} zeta(z) for the constant model."""
    s = sum(x ** (-z) for x in spec.a)
    return spec.det_normalized() * spec.vol * s * riemann_zeta(z)


def zeta_hat_prime_zero(spec):
    """Closed form (1/2) det(a/2pi) ln det(a/2pi) vol."""
    det = spec.det_normalized()
    return 0.5 * det * math.log(det) * spec.vol


def zeta_hat_prime_zero_product_rule(spec):
    """d/dz at 0 of det vol sum_j a_j^{-z} zeta(z) from the stored zeta constants."""
    det = spec.det_normalized()
    s0 = spec.n
    s1 = -sum(math.log(x) for x in spec.a)
    return det * spec.vol * (s1 * ZETA_AT_ZERO + s0 * ZETA_PRIME_AT_ZERO)


def theorem1_rhs(spec, p):
    """(1/2) rk(E) p^n det(a/2pi) vol [n ln p + ln det(a/2pi)]."""
    if p < 1:
        raise ValueError("p must be a positive integer")
    det = spec.det_normalized()
    return 0.5 * spec.rank_e * p ** spec.n * det * spec.vol * (spec.n * math.log(p) + math.log(det))


def zeta_hat_prime_numeric(spec, h=1e-3):
    """Five-point difference quotient of zeta_hat at z = 0."""
    f = lambda z: zeta_hat(z, spec)
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)
