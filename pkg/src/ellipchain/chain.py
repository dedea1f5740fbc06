"""Exact diagonalization of the elliptic-exchange chain in fixed-magnon sectors.

The Hamiltonian is ``J * sum_{j<k} h(j-k) (P_jk - 1)``, i.e. the
``(J/4) sum_{j != k} h(j-k)(sigma_j.sigma_k - 1)`` form rewritten with
``sigma_j.sigma_k = 2 P_jk - 1``.  States of a sector are labelled by the
sorted tuple of down-spin sites, numbered 1..N.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import EllipticContext, exchange_prefactor, h_exchange, wp
from .errors import DimensionCap, NonRealEnergy, ZeroVector

DIMENSION_CAP = 20_000
DEGENERACY_TOL = 1e-8


@dataclass(frozen=True)
class ModelParams:
    N: int
    alpha: float
    J: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ValueError(f"N must be an integer >= 3, got {self.N!r}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")

    @property
    def omega(self) -> complex:
        return 1j * self.alpha

    def ctx_N(self) -> EllipticContext:
        return _context(self.N, self.alpha)

    def ctx_1(self) -> EllipticContext:
        return _context(1, self.alpha)

    def exchange(self) -> np.ndarray:
        """``h(d)`` for d = 0..N-1 with ``h(0)`` set to 0."""
        out = np.zeros(self.N)
        out[1:] = h_exchange(np.arange(1, self.N), self.N, self.alpha, self.ctx_N())
        return out


_CTX_CACHE: dict = {}


def _context(omega1, alpha) -> EllipticContext:
    key = (float(omega1), float(alpha))
    ctx = _CTX_CACHE.get(key)
    if ctx is None:
        ctx = _CTX_CACHE[key] = EllipticContext.for_torus(omega1, alpha)
    return ctx


def sector_basis(N: int, M: int) -> list[tuple[int, ...]]:
    if not 0 <= M <= N:
        raise ValueError(f"need 0 <= M <= N, got M={M}, N={N}")
    return list(itertools.combinations(range(1, N + 1), M))


@dataclass(frozen=True)
class SectorHamiltonian:
    params: ModelParams
    M: int
    basis: list
    matrix: np.ndarray
    index: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.basis)


def _dist(a: int, b: int, N: int) -> int:
    return (a - b) % N


def build_hamiltonian(params: ModelParams, M: int) -> SectorHamiltonian:
    N = params.N
    h = params.exchange()
    # representative choice for the distance must not matter
    assert np.allclose(h[1:], h[1:][::-1], rtol=1e-12, atol=0)
    basis = sector_basis(N, M)
    index = {b: i for i, b in enumerate(basis)}
    H = np.zeros((len(basis), len(basis)))
    J = params.J
    for i, state in enumerate(basis):
        occupied = set(state)
        diag = 0.0
        for beta, n in enumerate(state):
            for s in range(1, N + 1):
                if s in occupied:
                    continue
                hv = h[_dist(n, s, N)]
                diag -= hv
                moved = tuple(sorted(state[:beta] + (s,) + state[beta + 1:]))
                H[index[moved], i] += J * hv
        H[i, i] += J * diag
    return SectorHamiltonian(params, M, basis, H, index)


def translation_matrix(basis, index, N: int) -> np.ndarray:
    """Permutation matrix of the shift n -> n+1 (mod N) on site labels."""
    T = np.zeros((len(basis), len(basis)))
    for i, state in enumerate(basis):
        shifted = tuple(sorted(n % N + 1 for n in state))
        T[index[shifted], i] = 1.0
    return T


def raising_matrix(N: int, M: int) -> np.ndarray:
    """Total S^+ from sector M into sector M-1 (one down spin flipped up)."""
    lo = sector_basis(N, M - 1)
    lo_index = {b: i for i, b in enumerate(lo)}
    hi = sector_basis(N, M)
    R = np.zeros((len(lo), len(hi)))
    for i, state in enumerate(hi):
        for beta in range(M):
            R[lo_index[state[:beta] + state[beta + 1:]], i] = 1.0
    return R


@dataclass
class SpectrumRecord:
    M: int
    eigenvalues: np.ndarray
    momentum_labels: np.ndarray
    provenance: str = "ED"
    residuals: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None  # columns, complex, momentum resolved
    highest_weight: np.ndarray | None = None
    raising_norms: np.ndarray | None = None


def _clusters(w: np.ndarray, tol: float) -> list[list[int]]:
    groups, cur = [], [0]
    scale = max(1.0, float(np.max(np.abs(w)))) if len(w) else 1.0
    for i in range(1, len(w)):
        if w[i] - w[cur[-1]] <= tol * scale:
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    return groups


def diagonalize(H: SectorHamiltonian, cap: int = DIMENSION_CAP) -> SpectrumRecord:
    """Full spectrum with translation labels and highest-weight flags.

    Inside each degenerate cluster the eigenvectors are rotated to diagonalize
    the translation operator, and then, inside each momentum block, split into
    the kernel of S^+ and its complement.
    """
    if H.dim > cap:
        raise DimensionCap(f"sector dimension {H.dim} exceeds cap {cap}")
    N, M = H.params.N, H.M
    w, v = np.linalg.eigh(H.matrix)
    T = translation_matrix(H.basis, H.index, N)
    R = raising_matrix(N, M) if M > 0 else None
    vecs = np.zeros(v.shape, dtype=complex)
    labels = np.zeros(len(w), dtype=int)
    hw = np.zeros(len(w), dtype=bool)
    rnorm = np.zeros(len(w))
    for group in _clusters(w, DEGENERACY_TOL):
        V = v[:, group].astype(complex)
        tw, tv = np.linalg.eig(V.conj().T @ T @ V)
        # T moves the amplitude at n to n+1, so T psi = exp(-2 pi i k / N) psi
        # for psi(n+1) = exp(2 pi i k / N) psi(n)
        ks = np.mod(np.rint(-np.angle(tw) * N / (2 * math.pi)).astype(int), N)
        cols, lab = [], []
        for k in sorted(set(ks.tolist())):
            sub = tv[:, ks == k]
            q, _ = np.linalg.qr(sub)
            block = V @ q
            if R is not None:
                _, sv, vh = np.linalg.svd(R @ block, full_matrices=True)
                sv = np.concatenate([sv, np.zeros(block.shape[1] - len(sv))])
                block = block @ vh.conj().T
                order = np.argsort(sv)
                block, sv = block[:, order], sv[order]
            else:
                sv = np.zeros(block.shape[1])
            cols.append(block)
            lab.extend([(k, s) for s in sv])
        block = np.concatenate(cols, axis=1)
        vecs[:, group] = block
        for j, idx in enumerate(group):
            labels[idx] = lab[j][0]
            rnorm[idx] = lab[j][1]
            hw[idx] = lab[j][1] < 1e-8
    resid = np.linalg.norm(H.matrix @ vecs - vecs * w, axis=0)
    return SpectrumRecord(M, w, labels, "ED", resid, vecs, hw, rnorm)


def lattice_operator(params: ModelParams, M: int):
    """Left-hand side of the lattice equation without the eigenvalue term.

    ``(L psi)(n) = sum_beta sum_{s not in n} wp_N(n_beta - s) psi(.., s, ..)
    + sum_{beta != gamma} wp_N(n_beta - n_gamma) psi(n)`` on the sorted basis.
    """
    N = params.N
    ctx = params.ctx_N()
    pv = np.zeros(N)
    pv[1:] = np.real(wp(np.arange(1, N).astype(complex), ctx))
    basis = sector_basis(N, M)
    index = {b: i for i, b in enumerate(basis)}
    L = np.zeros((len(basis), len(basis)))
    for i, state in enumerate(basis):
        occ = set(state)
        for beta, n in enumerate(state):
            for s in range(1, N + 1):
                if s not in occ:
                    moved = tuple(sorted(state[:beta] + (s,) + state[beta + 1:]))
                    L[i, index[moved]] += pv[_dist(n, s, N)]
        L[i, i] += sum(pv[_dist(a, b, N)] for a in state for b in state if a != b)
    return L, basis, index


def lattice_schrodinger_residual(psi, calE: complex, params: ModelParams, M: int) -> float:
    """max_n |(L psi)(n) - calE psi(n)| / max|psi|.

    ``psi`` is either a mapping from sorted site tuples to amplitudes or a
    vector on the lexicographic sector basis.
    """
    L, basis, index = lattice_operator(params, M)
    if isinstance(psi, dict):
        vec = np.array([psi[b] for b in basis], dtype=complex)
    else:
        vec = np.asarray(psi, dtype=complex)
    scale = np.max(np.abs(vec)) if len(vec) else 0.0
    if scale == 0.0:
        raise ZeroVector("psi vanishes identically")
    return float(np.max(np.abs(L @ vec - calE * vec)) / scale)


def energy_offset(params: ModelParams, M: int) -> complex:
    """Constant ``c_M`` such that ``E_M = J * pref * (calE + c_M)``.

    ``c_M = (2/omega) [M(M-1) zeta_N(omega/2) - M zeta_1(omega/2)]``, which
    reproduces E = 0 for the vacuum and the plane-wave magnon energies.
    """
    omega = params.omega
    return (2.0 / omega) * (M * (M - 1) * params.ctx_N().eta2 - M * params.ctx_1().eta2)


def energy_offset_literal(params: ModelParams, M: int) -> complex:
    """The constant with coefficient ``(2M(2M-1) - N)/4`` on ``zeta_N(omega/2)``.

    Kept for comparison only; it disagrees with the exact spectrum.
    """
    omega = params.omega
    coef = (2 * M * (2 * M - 1) - params.N) / 4.0
    return (2.0 / omega) * (coef * params.ctx_N().eta2 - M * params.ctx_1().eta2)


def energy_map(calE: complex, params: ModelParams, M: int, literal: bool = False) -> float:
    """Physical energy from a lattice eigenvalue ``calE``."""
    off = energy_offset_literal(params, M) if literal else energy_offset(params, M)
    E = params.J * exchange_prefactor(params.alpha) * (calE + off)
    if abs(E.imag) >= 1e-9 * max(1.0, abs(E)):
        raise NonRealEnergy(f"energy has imaginary part {E.imag:.3e}")
    return float(E.real)


def inverse_energy_map(E: float, params: ModelParams, M: int) -> complex:
    return E / (params.J * exchange_prefactor(params.alpha)) - energy_offset(params, M)


def one_magnon_energies(params: ModelParams) -> np.ndarray:
    """Plane-wave energies ``J sum_d h(d)(cos(2 pi k d / N) - 1)``, k = 0..N-1."""
    N = params.N
    h = params.exchange()
    d = np.arange(1, N)
    k = np.arange(N)[:, None]
    return params.J * np.sum(h[1:] * (np.cos(2 * math.pi * k * d / N) - 1.0), axis=1)
