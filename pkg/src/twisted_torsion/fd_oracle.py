"""Finite-difference oracle for the low spectrum of the squared twisted Dirac operator.

Each complex direction l is a square two-torus of side L with real
coordinates (X_l, Y_l).  In Landau gauge

    nabla_X = d_X,   nabla_Y = d_Y - i p a X,

with the magnetic boundary condition psi(X + L, Y) = exp(i p a L Y) psi(X, Y),
which is consistent because p a L^2 / 2 pi is an integer.  The operator
-sum (nabla_i + c(iota_i B))^2 + p c(R) + c(B)^2 + sum c(iota_i B)^2 is
discretized with unitary link factors exp(h (A_i + c(iota_i B))) and the
standard second-order hopping Laplacian.  The grid function is stored after a
discrete Fourier transform along every Y direction, which makes the Y-hops
diagonal and leaves a two-dimensional coupling graph per complex direction
so that sparse factorizations stay cheap.
"""
import math
from functools import reduce

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as splinalg

from . import clifford
from .torus import FluxError


def curvature_potential(model):
    """p-independent part c(R) = (1/2) sum R_ij c_i c_j with R_{2l-1,2l} = -i a_l."""
    n = model.n
    gens = clifford.clifford_generators(n)
    out = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for l, a in enumerate(model.spec.a):
        out += -1j * a * gens[2 * l] @ gens[2 * l + 1]
    return out


def twist_terms(model):
    """(c(iota_{e_i} B) for each i, c(B)^2 + sum_i c(iota_{e_i} B)^2)."""
    n = model.n
    dim = 2 ** n
    if model.B.is_zero:
        return [np.zeros((dim, dim), dtype=complex)] * (2 * n), np.zeros((dim, dim), dtype=complex)
    shifts = [clifford.contracted_three_form(model.B, i).matrix for i in range(1, 2 * n + 1)]
    cb = model.cB()
    return shifts, cb @ cb + sum(s @ s for s in shifts)


def _flux_integer(model, p, L):
    F = [p * a * L * L / (2 * math.pi) for a in model.spec.a]
    for f in F:
        if abs(f - round(f)) > 1e-9 or round(f) < 1:
            raise FluxError(f"p a L^2 / 2pi = {f!r} is not a positive integer")
    return F


def _hop_x(N, F):
    """Forward X-shift in the (j, m) basis, m the Fourier index along Y.

    The boundary twist exp(2 pi i F k / N) shifts the Fourier index by F.
    """
    rows, cols = [], []
    for j in range(N):
        for m in range(N):
            rows.append(j * N + m)
            cols.append((m - F) % N if j == N - 1 else (j + 1) * N + m)
    return sparse.csr_matrix((np.ones(N * N, dtype=complex), (rows, cols)), shape=(N * N, N * N))


def _hop_y(N, link_x):
    """Forward Y-shift with the Peierls factor of column j; diagonal in the Fourier index."""
    phase = np.exp(2j * np.pi * np.arange(N) / N)
    return sparse.diags(np.outer(link_x, phase).ravel(), format="csr")


def assemble(model, p, grid):
    """Sparse Hermitian matrix of the discretized operator on grid^(2n) points times the fiber."""
    n = model.n
    if n > 2:
        raise ValueError("finite-difference oracle supports n <= 2")
    if grid < 4:
        raise ValueError("grid too coarse")
    L = model.side_lengths()[0]
    _flux_integer(model, p, L)
    N = grid
    h = L / N
    coords = np.arange(N) * h
    shifts, vb = twist_terms(model)
    fiber = 2 ** n
    site_dim = N * N
    hops = []
    for l, a in enumerate(model.spec.a):
        F = int(round(p * a * L * L / (2 * math.pi)))
        link = np.exp(-1j * p * a * coords * h)
        hx = _hop_x(N, F)
        hy = _hop_y(N, link)
        for local, shift in ((hx, shifts[2 * l]), (hy, shifts[2 * l + 1])):
            mats = [sparse.identity(site_dim, format="csr")] * n
            mats[l] = local
            spatial = reduce(lambda A, B: sparse.kron(A, B, format="csr"), mats)
            spin_link = scipy.linalg.expm(h * shift)
            hops.append(sparse.kron(spatial, sparse.csr_matrix(spin_link), format="csr"))
    total_sites = site_dim ** n
    eye = sparse.identity(total_sites * fiber, format="csr")
    lap = sum((2 * eye - T - T.conj().T) for T in hops) / (h * h)
    pot = p * curvature_potential(model) + vb
    H = lap + sparse.kron(sparse.identity(total_sites, format="csr"), sparse.csr_matrix(pot), format="csr")
    return ((H + H.conj().T) / 2).tocsr()


def finite_difference_oracle(model, p, grid, k=30):
    """Lowest k eigenvalues (ascending) of the discretized operator."""
    H = assemble(model, p, grid)
    dim = H.shape[0]
    k = min(k, dim - 2)
    return _lowest(H, k)


def _lowest(H, k):
    ncomp, labels = csgraph.connected_components(abs(H) > 0, directed=False)
    vals = []
    for c in range(ncomp):
        idx = np.nonzero(labels == c)[0]
        sub = H[idx][:, idx]
        kk = min(k, len(idx))
        if len(idx) <= 400:
            vals.append(np.linalg.eigvalsh(sub.toarray())[:kk])
        else:
            # the operator is bounded below up to O(h^2), so a shift of -1 is safe
            vals.append(splinalg.eigsh(sub, k=min(kk, len(idx) - 2), sigma=-1.0, which="LM",
                                       return_eigenvectors=False).real)
    return np.sort(np.concatenate(vals))[:k]


def separable_oracle(model, p, grid, k=30):
    """n = 2, B = 0: the lattice operator is a sum over complex directions, so its spectrum
    is the set of pairwise sums of the one-direction lattice spectra."""
    if not model.B.is_zero:
        raise ValueError("separable oracle needs B = 0")
    from .model_kernel import CurvatureSpectrum
    from .torus import TorusModel
    L = model.side_lengths()[0]
    parts = []
    for a in model.spec.a:
        sub = TorusModel(CurvatureSpectrum((a,), L * L, 1))
        parts.append(_lowest(assemble(sub, p, grid), k))
    sums = reduce(lambda x, y: np.add.outer(x, y).ravel(), parts)
    return np.sort(sums)[:k]


def refinement_ratio(model, p, exact, grids=(32, 64), k=10, oracle=None):
    """Errors against ``exact`` on two grids and their ratio err(coarse)/err(fine)."""
    oracle = oracle or finite_difference_oracle
    errs = []
    for g in grids:
        vals = oracle(model, p, g, k=k)
        errs.append(np.abs(vals[:k] - np.asarray(exact[:k])))
    e0, e1 = (float(np.max(e)) for e in errs)
    return e0, e1, e0 / e1
