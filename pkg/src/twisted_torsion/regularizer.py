"""Heat supertraces, small-time coefficients and the regularized theta-function.

All quantities use the rescaled time u = p t, so that

    S(u) = p^-n Str(N exp(-u D^2 / 2p) Pi^perp)

and theta_p(z) = -p^{n-z} F(z) with F(z) the Mellin transform of S.
Then theta_p(0) = -p^n beta_0 and theta_p'(0) = -theta_p(0) ln p - p^n F'(0),
where F'(0) is split at u = 1 into I0 and I1.
"""
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import clifford, landau, model_kernel, pgrading
from .landau import CertificationError

DEFAULT_JMAX = 10
KAPPA_JMAX = 8
DEFAULT_CUTOFF = 24
CERT_TOL = 1e-12
SERIES_U_MAX = 0.35
REPORT_COLUMNS = ["p", "theta0", "theta_prime0", "rhs_theorem1", "residual", "residual_scaled",
                  "gap_over_p", "ker_plus", "ker_minus"]


class RegimeError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass
class HeatTraceExpansion:
    """beta[j] for j = -n..jmax-n, split into the constant-model part and the B-dependent part."""
    p: int
    n: int
    beta: dict
    delta: dict = field(default_factory=dict)
    provenance: str = "closed-form"

    def series(self, u, lo=None):
        """sum_{j >= lo} beta_j u^j."""
        return sum(b * u ** j for j, b in sorted(self.beta.items()) if lo is None or j >= lo)

    def singular_part(self, u):
        return sum(self.beta.get(j, 0.0) * u ** j for j in range(-self.n, 1))


@dataclass
class ThetaResult:
    p: int
    theta0: float
    theta_prime0: float
    i0: float
    i1: float
    quad_error: float
    tail_error: float
    u_split: float
    series_mismatch: float
    torsion: float = field(init=False)

    def __post_init__(self):
        self.torsion = math.exp(-self.theta_prime0 / 2)


def heat_supertrace(data, u, tol=CERT_TOL):
    """sum over positive eigenvalues of exp(-u lambda/2p) sum_q (-1)^q q m_q(lambda); kernel excluded."""
    if not (u > 0):
        raise ValueError("u must be positive")
    bound = data.tail_bound_at(u)
    if bound > tol:
        raise CertificationError(
            f"tail bound {bound:.3g} exceeds {tol:g} at u = {u:g} with cutoff {data.cutoff}",
            suggested_cutoff=_suggest_cutoff(data, u, tol))
    lam = data.lambdas()
    w = data.n_weights()
    pos = lam > 0
    return math.fsum(w[pos] * np.exp(-u * lam[pos] / (2 * data.p)))


def plain_supertrace(data, u):
    """Str(exp(-u D^2/2p)) including the kernel; independent of u."""
    lam = data.lambdas()
    return math.fsum(data.plain_weights() * np.exp(-u * lam / (2 * data.p)))


def _suggest_cutoff(data, u, tol):
    K = data.cutoff
    while landau.tail_bound(data.n, data.p, data.d_p, K, data.a_min, data.cb_norm, u) > tol:
        K += 1
        if K > 100_000:
            return None
    return K


def _spectral_S(data, u):
    lam = data.lambdas()
    w = data.n_weights()
    pos = lam > 0
    u = np.atleast_1d(u)
    vals = np.exp(-np.outer(u, lam[pos]) / (2 * data.p)) @ w[pos]
    return vals / data.p ** data.n


def beta_coefficients(model, p, jmax=DEFAULT_JMAX, method="closed-form"):
    """Small-u coefficients of S(u).

    The top p-order comes from the closed-form kappa_j.  When B is nonzero,
    the lower p-orders of Theta_j(0) from the parametrix recurrence are added.
    ``method="parametrix"`` takes every order from the recurrence instead.
    """
    n = model.n
    if jmax < n:
        raise ValueError("jmax must be at least n so that beta_0 exists")
    pref = model.rank_e * model.spec.vol / (2 * math.pi) ** n
    beta, delta = {}, {}
    if method == "closed-form":
        # kappa_j is only tabulated up to KAPPA_JMAX; higher top orders come from the recurrence
        kappas = model_kernel.kappa_coefficients(model.spec, min(jmax, KAPPA_JMAX))
        for j, k in enumerate(kappas):
            beta[j - n] = pref * clifford.number_weighted_supertrace(k).real / 2 ** j
    elif method != "parametrix":
        raise ValueError(f"unknown method {method!r}")
    if method == "parametrix" or not model.B.is_zero:
        op = pgrading.assemble_dirac_squared(model)
        thetas = pgrading.parametrix_extended(op, jmax)
        for j, th in enumerate(thetas):
            tot_low = 0.0
            tot_top = 0.0
            for l, mat in th.at_origin().items():
                val = clifford.number_weighted_supertrace(mat).real * float(p) ** (l - j)
                if l == j:
                    tot_top += val
                else:
                    tot_low += val
            d = pref * tot_low / 2 ** j
            delta[j - n] = d
            if method == "parametrix" or j > KAPPA_JMAX:
                beta[j - n] = pref * (tot_top + tot_low) / 2 ** j
            else:
                beta[j - n] += d
    return HeatTraceExpansion(p=p, n=n, beta=beta, delta=delta, provenance=method)


def fit_beta(data, n, u_lo=1e-3, u_hi=1e-1, npts=60, order=4):
    """Least-squares fit of sum_{j=-n}^{order} beta_j u^j to u^n S(u) sampled on [u_lo, u_hi]."""
    u = np.geomspace(u_lo, u_hi, npts)
    S = np.array([heat_supertrace(data, x) for x in u]) / data.p ** n
    powers = np.arange(-n, order + 1)
    A = u[:, None] ** (powers + n)[None, :]
    coef, *_ = np.linalg.lstsq(A, S * u ** n, rcond=None)
    resid = float(np.max(np.abs(A @ coef - S * u ** n)))
    return dict(zip(powers.tolist(), coef.tolist())), resid


def subtraction_exponent(model, expansion, u_lo=1e-3, u_hi=1e-1, npts=40):
    """Slope of log|S(u) - sum_{j<=0} beta_j u^j| against log u, from the small-u model of S."""
    u = np.geomspace(u_lo, u_hi, npts)
    r = np.abs(np.array([_small_u_remainder(model, expansion, x) for x in u]))
    if np.all(r < 1e-300):
        return math.inf
    slope = np.polyfit(np.log(u), np.log(r), 1)[0]
    return float(slope)


def _small_u_remainder(model, expansion, u):
    """S(u) - sum_{j<=0} beta_j u^j for small u.

    The untwisted part is evaluated in closed form; the twisted corrections
    by their power series.
    """
    base = model.rank_e * model_kernel.laurent_remainder(u, model.spec)
    return base + sum(d * u ** j for j, d in expansion.delta.items() if j >= 1)


def _check_regime(model, p, kernel):
    if kernel is None:
        return
    if not kernel.determinate:
        raise RegimeError(f"p = {p} lies below the gap threshold {model.gap_threshold()}")
    if abs(kernel.str_n) > 1e-8 * max(1, kernel.dim_plus or 1):
        raise RegimeError(f"Str(N Pi_p) = {kernel.str_n} is not zero")


def theta_zero(model, p, expansion, kernel=None):
    """theta_p(0) = -p^n beta_0."""
    _check_regime(model, p, kernel)
    return -(p ** model.n) * expansion.beta[0]


def theta_prime_zero(model, p, data, expansion, tol=CERT_TOL, quad_tol=1e-12, kernel=None):
    """theta_p'(0) by the split Mellin integral.

    I0 = int_0^1 (S - sum_{j<=0} beta_j u^j) du/u + sum_{j<0} beta_j/j + gamma beta_0,
    I1 = int_1^inf S du/u.

    On [0, u_c] S is the closed-form model plus the parametrix corrections,
    on [u_c, 1] and beyond it is the certified truncated spectrum.
    """
    n = model.n
    _check_regime(model, p, kernel)
    u_c = data.certified_u(tol)
    if u_c > SERIES_U_MAX:
        raise CertificationError(
            f"cutoff {data.cutoff} only certifies u >= {u_c:.3g}",
            suggested_cutoff=_suggest_cutoff(data, 0.25, tol))
    beta = expansion.beta

    # [0, u_c]: closed-form base plus corrections, integrated term by term
    base, err0 = integrate.quad(lambda u: model.rank_e * model_kernel.laurent_remainder(u, model.spec) / u,
                                0.0, u_c, epsabs=quad_tol, epsrel=quad_tol, limit=200)
    corr = sum(d * u_c ** j / j for j, d in expansion.delta.items() if j >= 1)

    # [u_c, 1]: spectral side minus the singular terms
    def integrand(u):
        return (_spectral_S(data, u)[0] - expansion.singular_part(u)) / u

    mid, err1 = integrate.quad(integrand, u_c, 1.0, epsabs=quad_tol, epsrel=quad_tol, limit=200)
    i0 = base + corr + mid + sum(beta[j] / j for j in range(-n, 0)) + model_kernel.EULER_GAMMA * beta[0]

    # [1, inf): exact exponential integrals
    lam = data.lambdas()
    w = data.n_weights()
    pos = lam > 0
    i1 = math.fsum(w[pos] * special.exp1(lam[pos] / (2 * p))) / p ** n

    tail_err, _ = integrate.quad(lambda u: data.tail_bound_at(u) / u, u_c, np.inf, limit=200)
    quad_err = err0 + err1
    if quad_err > 1e3 * quad_tol + 1e-10:
        raise QuadratureError(f"quadrature error estimate {quad_err:.3g} above tolerance")
    theta0 = -(p ** n) * beta[0]
    theta_p0 = -theta0 * math.log(p) - p ** n * (i0 + i1)
    mismatch = series_mismatch(model, data, expansion, u_c)
    return ThetaResult(p=p, theta0=theta0, theta_prime0=theta_p0, i0=i0, i1=i1, quad_error=quad_err,
                       tail_error=tail_err * p ** n, u_split=u_c, series_mismatch=mismatch)


def theta_function(model, p, data, expansion, z, tol=CERT_TOL, quad_tol=1e-13):
    """theta_p(z) = -p^{n-z} F(z) for real z near 0, every piece by quadrature.

    F(z) = (1/Gamma(z)) [int_0^1 (S - sum_{j<=0} beta_j u^j) u^{z-1} du
                         + sum_{j<0} beta_j/(z+j) + int_1^U S u^{z-1} du] + beta_0/Gamma(z+1),
    with U chosen so that exp(-U gap/2p) < 1e-14.
    """
    n = model.n
    if abs(z) >= 0.5:
        raise ValueError("theta_function is meant for |z| < 1/2")
    u_c = data.certified_u(tol)
    beta = expansion.beta
    base, _ = integrate.quad(
        lambda u: model.rank_e * model_kernel.laurent_remainder(u, model.spec) * u ** (z - 1),
        0.0, u_c, epsabs=quad_tol, epsrel=quad_tol, limit=200)
    corr = sum(d * u_c ** (j + z) / (j + z) for j, d in expansion.delta.items() if j >= 1)
    mid, _ = integrate.quad(lambda u: (_spectral_S(data, u)[0] - expansion.singular_part(u)) * u ** (z - 1),
                            u_c, 1.0, epsabs=quad_tol, epsrel=quad_tol, limit=200)
    gap = landau.spectral_gap(data)
    U = max(1.0, 2 * p * 14 * math.log(10) / gap)
    far, _ = integrate.quad(lambda u: _spectral_S(data, u)[0] * u ** (z - 1), 1.0, U,
                            epsabs=quad_tol, epsrel=quad_tol, limit=400)
    poles = sum(beta[j] / (z + j) for j in range(-n, 0))
    F = (base + corr + mid + poles + far) / special.gamma(z) + beta[0] / special.gamma(z + 1)
    return -(p ** (n - z)) * F


def theta_by_quadrature(model, p, data, expansion, h=1e-5):
    """(theta_p(0), theta_p'(0)) from symmetric differences of theta_function."""
    plus = theta_function(model, p, data, expansion, h)
    minus = theta_function(model, p, data, expansion, -h)
    return 0.5 * (plus + minus), (plus - minus) / (2 * h)


def series_mismatch(model, data, expansion, u_c, npts=8):
    """Max difference between the small-u model and the spectral S(u) on [u_c, 1.5 u_c]."""
    us = np.linspace(u_c, 1.5 * u_c, npts)
    spec = _spectral_S(data, us)
    small = np.array([_small_u_remainder(model, expansion, u) + expansion.singular_part(u) for u in us])
    return float(np.max(np.abs(spec - small)))


def direct_spectral_theta_prime(data, p):
    """theta_p'(0) from the Landau series sum_k m (p a k)^{-z} continued by Riemann zeta (n = 1, B = 0)."""
    if data.n != 1:
        raise ValueError("closed-form Landau continuation needs n = 1")
    pos = [(lam, m) for lam, m in data.entries if lam > 0]
    if not pos:
        raise ValueError("no positive eigenvalues")
    lam1, m1 = pos[0][0], pos[0][1][1]
    for k, (lam, m) in enumerate(pos, start=1):
        if abs(lam - k * lam1) > 1e-9 * lam or m[1] != m1 or m[0] != m1:
            raise ValueError("spectrum is not an untwisted Landau ladder")
    # theta(z) = m1 (lam1/2)^{-z} zeta(z)
    return m1 * (-math.log(lam1 / 2) * model_kernel.ZETA_AT_ZERO + model_kernel.ZETA_PRIME_AT_ZERO)


@dataclass
class AsymptoticsReport:
    rows: list
    verdict: dict
    header: dict

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"header": self.header, "verdict": self.verdict, "rows": self.rows},
                          indent=1, sort_keys=True, default=float)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def report_row(model, p, K=DEFAULT_CUTOFF, jmax=DEFAULT_JMAX, tol=CERT_TOL, data=None):
    if data is None:
        data = landau.landau_spectrum(model, p, K)
    kern = landau.kernel_data(model, p, data)
    expansion = beta_coefficients(model, p, jmax)
    res = theta_prime_zero(model, p, data, expansion, tol=tol, kernel=kern)
    rhs = model_kernel.theorem1_rhs(model.spec, p)
    resid = res.theta_prime0 - rhs
    return {
        "p": p,
        "theta0": res.theta0,
        "theta_prime0": res.theta_prime0,
        "rhs_theorem1": rhs,
        "residual": resid,
        "residual_scaled": resid / p ** (model.n - 0.5),
        "gap_over_p": landau.spectral_gap(data) / p,
        "ker_plus": kern.dim_plus,
        "ker_minus": kern.dim_minus,
        "u_split": res.u_split,
        "quad_error": res.quad_error,
        "tail_error": res.tail_error,
        "series_mismatch": res.series_mismatch,
        "torsion": res.torsion,
    }


def _row_job(args):
    model_dict, p, K, jmax, tol = args
    from .torus import TorusModel
    return report_row(TorusModel.from_dict(model_dict), p, K, jmax, tol)


def asymptotics_report(model, p_grid, K=DEFAULT_CUTOFF, jmax=DEFAULT_JMAX, tol=CERT_TOL,
                       saturation_tol=1e-6, workers=1, spectra=None):
    """Rows for each p and a verdict on the leading-term trend."""
    p_grid = list(p_grid)
    if not p_grid:
        raise ValueError("p_grid is empty")
    if any(b <= a for a, b in zip(p_grid, p_grid[1:])):
        raise ValueError("p_grid must be strictly ascending")
    if spectra is not None:
        rows = [report_row(model, p, K, jmax, tol, data=spectra[p]) for p in p_grid]
    elif workers > 1:
        jobs = [(model.to_dict(), p, K, jmax, tol) for p in p_grid]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row_job, jobs))
    else:
        rows = [report_row(model, p, K, jmax, tol) for p in p_grid]
    verdict = trend_verdict(rows, saturation_tol)
    header = {
        "normalization": "u = p t; S(u) = p^-n Str(N exp(-u D^2/2p) Pi^perp)",
        "model": model.to_dict(),
        "cutoff": K,
        "jmax": jmax,
        "certification_tol": tol,
        "saturation_tol": saturation_tol,
    }
    return AsymptoticsReport(rows=rows, verdict=verdict, header=header)


def strictly_decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


def trend_verdict(rows, saturation_tol=1e-6):
    """Pass when every residual is saturated at zero, or the scaled residual decreases strictly."""
    saturated = all(abs(r["residual"]) <= saturation_tol * max(1.0, abs(r["theta_prime0"])) for r in rows)
    scaled = [abs(r["residual_scaled"]) for r in rows]
    decreasing = strictly_decreasing(scaled[1:])
    gaps = [r["gap_over_p"] for r in rows]
    return {
        "saturated": saturated,
        "scaled_residual_decreasing": decreasing,
        "gap_constant": min(gaps),
        "pass": bool(saturated or decreasing) and min(gaps) > 0,
    }
