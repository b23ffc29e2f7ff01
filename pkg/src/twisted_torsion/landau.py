"""Spectra of the squared twisted Dirac operator on flat tori.

The magnetic translations commute with D_p and with the constant c(B),
so every eigenvalue carries the transverse degeneracy
d_p = rank_e p^n flux and the problem reduces to the cyclotron oscillators
tensored with the spinor fiber.  In that reduced space

    nabla_{2l-1} = s_l (A_l - A_l^+)/2,  nabla_{2l} = s_l (A_l + A_l^+)/(2i),
    s_l = sqrt(2 p a_l),

and D_p = sum_l s_l (b_l^+ A_l + b_l A_l^+) preserves each level
M_l = k_l + n_l.  The basis is truncated at total level sum_l M_l <= K,
which keeps the untwisted operator exact on every retained level.
"""
import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import sparse, special
from scipy.sparse import csgraph

from . import clifford
from .constants import LANDAU_LEVEL_FACTOR

SCHEMA = 1
CLUSTER_RTOL = 1e-9
ZERO_TOL = 1e-9


class CertificationError(RuntimeError):
    def __init__(self, msg, suggested_cutoff=None):
        super().__init__(msg)
        self.suggested_cutoff = suggested_cutoff


@dataclass
class SpectralData:
    p: int
    n: int
    cutoff: int
    d_p: int
    entries: list  # [(lambda, (m_0..m_n))]
    a_min: float
    cb_norm: float
    tail_ref_u: float = 1.0
    model: dict = field(default_factory=dict)

    @property
    def tail_bound(self):
        return self.tail_bound_at(self.tail_ref_u)

    def lambdas(self):
        return np.array([e[0] for e in self.entries])

    def mults(self):
        return np.array([e[1] for e in self.entries], dtype=float)

    def n_weights(self):
        """sum_q (-1)^q q m_q per eigenvalue."""
        q = np.arange(self.n + 1)
        return self.mults() @ ((-1.0) ** q * q)

    def plain_weights(self):
        q = np.arange(self.n + 1)
        return self.mults() @ ((-1.0) ** q)

    def tail_bound_at(self, u):
        """Upper bound on |p^-n Str(N e^{-u D^2/2p})| carried by levels above the cutoff."""
        return tail_bound(self.n, self.p, self.d_p, self.cutoff, self.a_min, self.cb_norm, u)

    def certified_u(self, tol=1e-13):
        """Smallest u with tail_bound_at(u) <= tol."""
        lo, hi = 1e-6, 1.0
        while self.tail_bound_at(hi) > tol:
            hi *= 2
            if hi > 1e6:
                return math.inf
        if self.tail_bound_at(lo) <= tol:
            return lo
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.tail_bound_at(mid) > tol:
                lo = mid
            else:
                hi = mid
        return hi

    def to_json(self):
        doc = {
            "schema": SCHEMA,
            "p": self.p,
            "cutoff": self.cutoff,
            "tail_bound": self.tail_bound,
            "tail_ref_u": self.tail_ref_u,
            "n": self.n,
            "d_p": self.d_p,
            "a_min": self.a_min,
            "cb_norm": self.cb_norm,
            "model": self.model,
            "entries": [{"lambda": float(lam), "mult": [float(m) for m in mult]} for lam, mult in self.entries],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unsupported spectral data schema {doc.get('schema')!r}")
        entries = [(e["lambda"], tuple(e["mult"])) for e in doc["entries"]]
        return cls(p=doc["p"], n=doc["n"], cutoff=doc["cutoff"], d_p=doc["d_p"], entries=entries,
                   a_min=doc["a_min"], cb_norm=doc["cb_norm"], tail_ref_u=doc["tail_ref_u"],
                   model=doc.get("model", {}))


def level_count(n, T):
    """Number of reduced states (k, J) with sum(k) + |J| = T."""
    return sum(math.comb(n, q) * math.comb(T - q + n - 1, n - 1) for q in range(min(n, T) + 1))


def _level_counts(n, T):
    T = np.asarray(T)
    return sum(math.comb(n, q) * special.comb(T - q + n - 1, n - 1, exact=False) * (T >= q)
               for q in range(n + 1))


def tail_bound(n, p, d_p, K, a_min, cb_norm, u, chunk=4096):
    # |mu| >= sqrt(2 p a_min T) - ||c(B)|| on level T (Weyl), N-weight at most n per state
    tot = 0.0
    start = K + 1
    while True:
        T = np.arange(start, start + chunk, dtype=float)
        mu = np.maximum(0.0, np.sqrt(2 * p * a_min * T) - cb_norm)
        terms = _level_counts(n, T) * np.exp(-u * mu * mu / (2 * p))
        tot += math.fsum(terms)
        if terms[-1] <= 1e-30 * max(tot, 1e-300) or start > K + 10 ** 7:
            break
        start += chunk
    return d_p * n * tot / p ** n


def reduced_basis(n, K):
    """States (k, J) of the truncated reduced space, ordered by (T, k, J)."""
    space = clifford.SpinorSpace(n)
    states = []
    for k in product(range(K + 1), repeat=n):
        for J in space.basis:
            T = sum(k) + len(J)
            if T <= K:
                states.append((T, k, J))
    states.sort()
    return [(k, J) for _, k, J in states]


def _full_index(k, J, K, space):
    idx = 0
    for kl in k:
        idx = idx * (K + 1) + kl
    return idx * space.dim + space.index[J]


def ladder_covariant_derivatives(model, p, K):
    """Matrices of nabla_1..nabla_2n on the full product space with k_l <= K."""
    n = model.n
    nb = K + 1
    a_op = np.diag(np.sqrt(np.arange(1, nb)), 1).astype(complex)
    eye_b = np.eye(nb)
    eye_s = np.eye(2 ** n)
    out = []
    for l in range(n):
        mats = [eye_b] * n
        mats[l] = a_op
        A = mats[0]
        for m in mats[1:]:
            A = np.kron(A, m)
        A = np.kron(A, eye_s)
        s = math.sqrt(2 * p * model.spec.a[l])
        out.append(s * (A - A.conj().T) / 2)
        out.append(s * (A + A.conj().T) / 2j)
    return out


def reduced_dirac_dense(model, p, K):
    """(P (sum_i c(e_i) nabla_i + c(B)) P, basis) assembled from the covariant derivatives.

    Slow reference path kept for cross-checking :func:`reduced_dirac`.
    """
    n = model.n
    space = clifford.SpinorSpace(n)
    nablas = ladder_covariant_derivatives(model, p, K)
    nb = (K + 1) ** n
    gens = clifford.clifford_generators(n)
    D = np.zeros_like(nablas[0])
    for g, nab in zip(gens, nablas):
        D += np.kron(np.eye(nb), g) @ nab
    if not model.B.is_zero:
        D += np.kron(np.eye(nb), model.cB())
    basis = reduced_basis(n, K)
    idx = np.array([_full_index(k, J, K, space) for k, J in basis])
    return D[np.ix_(idx, idx)], basis


def reduced_dirac(model, p, K):
    """Sparse P (D_p + c(B)) P on the truncated reduced space, with its basis.

    Uses D_p = sum_l s_l (b_l^+ A_l + b_l A_l^+) directly.
    """
    n = model.n
    space = clifford.SpinorSpace(n)
    basis = reduced_basis(n, K)
    index = {st: i for i, st in enumerate(basis)}
    s = [math.sqrt(2 * p * al) for al in model.spec.a]
    rows, cols, vals = [], [], []
    for col, (k, J) in enumerate(basis):
        for l in range(1, n + 1):
            sign = (-1) ** sum(1 for m in J if m < l)
            kl = k[l - 1]
            if l not in J and kl >= 1:
                # b_l^+ A_l
                k2 = k[:l - 1] + (kl - 1,) + k[l:]
                J2 = tuple(sorted(J + (l,)))
                rows.append(index[(k2, J2)])
                cols.append(col)
                vals.append(s[l - 1] * math.sqrt(kl) * sign)
            elif l in J:
                # b_l A_l^+
                k2 = k[:l - 1] + (kl + 1,) + k[l:]
                J2 = tuple(m for m in J if m != l)
                target = index.get((k2, J2))
                if target is not None:
                    rows.append(target)
                    cols.append(col)
                    vals.append(s[l - 1] * math.sqrt(kl + 1) * sign)
    if not model.B.is_zero:
        cb = model.cB()
        for col, (k, J) in enumerate(basis):
            for r in np.nonzero(np.abs(cb[:, space.index[J]]) > 0)[0]:
                target = index.get((k, space.basis[r]))
                if target is not None:
                    rows.append(target)
                    cols.append(col)
                    vals.append(cb[r, space.index[J]])
    dim = len(basis)
    D = sparse.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(dim, dim))
    return D, basis


def _blocks(D):
    ncomp, labels = csgraph.connected_components(abs(D) > 0, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(ncomp + 1))
    return [order[bounds[c]:bounds[c + 1]] for c in range(ncomp)]


def _cluster(lams, weights):
    order = np.argsort(lams, kind="stable")
    lams, weights = lams[order], weights[order]
    out = []
    start = 0
    for i in range(1, len(lams) + 1):
        if i == len(lams) or lams[i] - lams[start] > CLUSTER_RTOL * max(1.0, abs(lams[start])):
            lam = float(np.mean(lams[start:i]))
            out.append((lam, weights[start:i].sum(axis=0)))
            start = i
    return out


def landau_spectrum(model, p, K, tail_ref_u=1.0, method="ladder"):
    """Truncated spectrum of the squared twisted Dirac operator with degree-resolved multiplicities.

    ``method="ladder"`` diagonalizes P D P and squares its eigenvalues, i.e. the
    spectrum of (P D P)^2, which keeps the even/odd pairing exact.
    ``method="symbolic"`` diagonalizes P D^2 P obtained from the symbolic operator.
    """
    if p < 1 or K < 1:
        raise ValueError("p and K must be positive")
    if method not in ("ladder", "symbolic"):
        raise ValueError(f"unknown method {method!r}")
    n = model.n
    d_p = model.degeneracy(p)
    if method == "ladder":
        D, basis = reduced_dirac(model, p, K)
    else:
        from . import pgrading
        dense, basis = symbolic_reduced_matrix(pgrading.assemble_dirac_squared(model), model, p, K)
        dense = (dense + dense.conj().T) / 2
        D = sparse.csr_matrix(dense)
    degs = np.array([len(J) for _, J in basis])
    lam_parts, weight_parts = [], []
    # the operator splits into blocks that the conserved levels never connect
    for block in _blocks(D):
        sub = D[block][:, block].toarray()
        if method == "ladder":
            mu, vecs = np.linalg.eigh(sub)
            lam = mu ** 2
            lam[np.abs(mu) < ZERO_TOL] = 0.0
        else:
            lam, vecs = np.linalg.eigh(sub)
            lam[np.abs(lam) < ZERO_TOL ** 2 * max(1.0, p)] = 0.0
            lam = np.maximum(lam, 0.0)
        probs = np.abs(vecs) ** 2
        w = np.zeros((len(lam), n + 1))
        for q in range(n + 1):
            w[:, q] = probs[degs[block] == q].sum(axis=0)
        lam_parts.append(lam)
        weight_parts.append(w)
    clusters = _cluster(np.concatenate(lam_parts), np.vstack(weight_parts))
    entries = [(lam_c, tuple(float(d_p * w) for w in wts)) for lam_c, wts in clusters]
    if model.B.is_zero:
        entries = [(l, tuple(int(round(m)) for m in mult)) for l, mult in entries]
    else:
        # snap degree weights that are integral up to round-off
        entries = [(l, tuple(float(round(m)) if abs(m - round(m)) < 1e-9 else m for m in mult))
                   for l, mult in entries]
    return SpectralData(p=p, n=n, cutoff=K, d_p=d_p, entries=entries, a_min=float(min(model.spec.a)),
                        cb_norm=model.cB_norm(), tail_ref_u=tail_ref_u, model=model.to_dict())


def closed_form_levels(model, p, K):
    """Untwisted Landau levels 2p(sum a_l k_l + sum_{l in J} a_l) with degree multiplicities."""
    if not model.B.is_zero:
        raise ValueError("closed-form levels only exist for B = 0")
    n = model.n
    d_p = model.degeneracy(p)
    a = model.spec.a
    lam, wts = [], []
    for k, J in reduced_basis(n, K):
        lam.append(LANDAU_LEVEL_FACTOR * p * (sum(al * kl for al, kl in zip(a, k)) + sum(a[l - 1] for l in J)))
        w = np.zeros(n + 1)
        w[len(J)] = d_p
        wts.append(w)
    clusters = _cluster(np.array(lam), np.array(wts))
    return [(l, tuple(int(round(m)) for m in w)) for l, w in clusters]


@dataclass(frozen=True)
class KernelData:
    dim_plus: int = None
    dim_minus: int = None
    determinate: bool = True
    str_n: float = None


def kernel_data(model, p, data=None, K=None):
    """Even and odd kernel dimensions; indeterminate below the model's gap threshold."""
    if p < model.gap_threshold():
        return KernelData(None, None, False, None)
    if data is None:
        data = landau_spectrum(model, p, K or 8)
    zero = [m for lam, m in data.entries if lam == 0.0]
    if not zero:
        return KernelData(0, 0, True, 0.0)
    m = np.array(zero[0], dtype=float)
    q = np.arange(len(m))
    plus = m[q % 2 == 0].sum()
    minus = m[q % 2 == 1].sum()
    str_n = float(m @ ((-1.0) ** q * q))
    return KernelData(int(round(plus)), int(round(minus)), True, str_n)


def spectral_gap(data):
    lams = [lam for lam, _ in data.entries if lam > 0]
    if not lams:
        raise ValueError("spectral data has no positive eigenvalue")
    return min(lams)


def required_cutoff(model, p, u, tol=1e-13, start=4):
    """Smallest K whose tail bound at u is below tol."""
    d_p = model.degeneracy(p)
    K = start
    while tail_bound(model.n, p, d_p, K, min(model.spec.a), model.cB_norm(), u) > tol:
        K += 1
        if K > 10_000:
            raise CertificationError("no cutoff up to 10000 certifies the tail")
    return K


def _ladder(levels):
    return sparse.diags(np.sqrt(np.arange(1, levels)), 1, shape=(levels, levels), format="csr", dtype=complex)


def symbolic_ladder_matrices(model, p, K, guiding_levels=4):
    """Matrices of x_i and d_i on cyclotron x guiding-center Fock spaces times the fiber.

    Per complex direction, with s = sqrt(2 p a),
        nabla_X = s (A - A^+)/2,        nabla_Y = s (A + A^+)/(2i),
        tilde_X = s (G - G^+)/2,        tilde_Y = -s (G + G^+)/(2i),
    where tilde_* are the guiding-center derivatives commuting with nabla_*.
    Then d = (nabla + tilde)/2, Y = (nabla_X - tilde_X)/(i p a) and
    X = (tilde_Y - nabla_Y)/(i p a).  Cyclotron levels run to K + 2.
    """
    n = model.n
    na, ng = K + 3, guiding_levels
    per_mode = []
    for l, a in enumerate(model.spec.a):
        s = math.sqrt(2 * p * a)
        A = sparse.kron(_ladder(na), sparse.identity(ng), format="csr")
        G = sparse.kron(sparse.identity(na), _ladder(ng), format="csr")
        nab_x = s * (A - A.conj().T) / 2
        nab_y = s * (A + A.conj().T) / 2j
        til_x = s * (G - G.conj().T) / 2
        til_y = -s * (G + G.conj().T) / 2j
        per_mode.append((
            (til_y - nab_y) / (1j * p * a),
            (nab_x - til_x) / (1j * p * a),
            (nab_x + til_x) / 2,
            (nab_y + til_y) / 2,
        ))
    mode_dim = na * ng
    eye_mode = sparse.identity(mode_dim, format="csr")
    eye_fiber = sparse.identity(2 ** n, format="csr")

    def embed(mat, l):
        mats = [eye_mode] * n
        mats[l] = mat
        out = mats[0]
        for m in mats[1:]:
            out = sparse.kron(out, m, format="csr")
        return sparse.kron(out, eye_fiber, format="csr")

    xs, ds = [], []
    for l, (X, Y, dX, dY) in enumerate(per_mode):
        xs += [embed(X, l), embed(Y, l)]
        ds += [embed(dX, l), embed(dY, l)]
    return xs, ds, (na, ng)


def symbolic_reduced_matrix(op, model, p, K):
    """P op P on the reduced basis (guiding center in its ground state), op a SymbolicOperator.

    Each term p^l x^I d^J M is mapped through the ladder representation of x_i and d_i
    and the products are formed by sparse matrix multiplication.
    """
    n = model.n
    xs, ds, (na, ng) = symbolic_ladder_matrices(model, p, K)
    dim = xs[0].shape[0]
    total = sparse.csr_matrix((dim, dim), dtype=complex)
    eye_spatial = sparse.identity(dim // 2 ** n, format="csr")
    for (l, I, J), coeff in op.to_complex().terms.items():
        term = sparse.kron(eye_spatial, sparse.csr_matrix(np.asarray(coeff, dtype=complex)), format="csr")
        for i in reversed(range(op.dim)):
            for _ in range(J[i]):
                term = ds[i] @ term
        for i in reversed(range(op.dim)):
            for _ in range(I[i]):
                term = xs[i] @ term
        total = total + term * float(p) ** l
    space = clifford.SpinorSpace(n)
    basis = reduced_basis(n, K)
    idx = []
    for k, Jset in basis:
        pos = 0
        for kl in k:
            pos = pos * (na * ng) + kl * ng  # guiding level 0
        idx.append(pos * space.dim + space.index[Jset])
    idx = np.array(idx)
    return total[idx][:, idx].toarray(), basis
