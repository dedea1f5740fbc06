"""Continuum chi-function, the lattice ansatz built from it, and their checks."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import combinatorics
from .chain import sector_basis
from .combinatorics import ColorMap
from .elliptic import POLE_GUARD, EllipticContext, log_tilde_sigma, wp
from .errors import BranchAmbiguity, DegenerateT, PoleProximity

T_SEPARATION = 1e-6
# offsets used to step off integer points where single chi terms have poles
_POLE_STEP = 1e-3


@dataclass(frozen=True)
class ChiParameters:
    p: tuple
    t: tuple
    cm: ColorMap
    ctx: EllipticContext
    _perm_w: np.ndarray = field(init=False, repr=False, compare=False)
    _W: np.ndarray = field(init=False, repr=False, compare=False)
    _targ: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = tuple(complex(v) for v in self.p)
        t = tuple(complex(v) for v in self.t)
        cm = self.cm
        if len(p) != cm.M or len(t) != cm.m:
            raise ValueError(f"need {cm.M} momenta and {cm.m} t-parameters")
        for a, b in itertools.combinations(range(cm.m), 2):
            if cm.c[a] == cm.c[b] and abs(t[a] - t[b]) <= T_SEPARATION:
                raise DegenerateT(f"t[{a}] and t[{b}] coincide")
        perms = combinatorics.nonzero_permutations(cm)
        m, M = cm.m, cm.M
        # W[s, j, :] holds the coefficients of x in the j-th sigma subscript
        W = np.zeros((len(perms), m, M))
        targ = np.zeros((len(perms), m), dtype=complex)
        tt = np.array(t + (0j,))
        for i, wperm in enumerate(perms):
            acc = np.zeros(M)
            s = wperm.s
            for j in range(m):
                col = cm.c[s[j] - 1]
                acc[col - 1] += 1.0
                acc[col] -= 1.0
                W[i, j] = acc
                nxt = s[j + 1] - 1 if j + 1 < m else m  # boundary term is t = 0
                targ[i, j] = tt[s[j] - 1] - tt[nxt]
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "_perm_w", np.array([w.weight for w in perms], dtype=float))
        object.__setattr__(self, "_W", W)
        object.__setattr__(self, "_targ", targ)

    @property
    def M(self) -> int:
        return self.cm.M


def _chi_terms(x, params: ChiParameters):
    """log of each permutation term (without weight) and the plane-wave log."""
    x = np.asarray(x, dtype=complex)
    plane = 1j * (x @ np.array(params.p))
    if params.cm.m == 0:
        return plane, np.zeros(x.shape[:-1] + (1,), dtype=complex)
    w = np.einsum("sjb,...b->...sj", params._W, x)
    logs = log_tilde_sigma(w, np.broadcast_to(params._targ, w.shape), params.ctx)
    return plane, logs.sum(axis=-1)


def _chi_raw(x, params: ChiParameters):
    plane, lt = _chi_terms(x, params)
    if params.cm.m == 0:
        return np.exp(plane), np.abs(np.exp(plane))
    with np.errstate(invalid="ignore", over="ignore"):
        ref = np.max(lt.real, axis=-1, keepdims=True)
        terms = params._perm_w * np.exp(lt - ref)
        scale = np.exp(plane + ref[..., 0])
    return scale * terms.sum(axis=-1), np.abs(scale) * np.abs(terms).sum(axis=-1)


def _near_term_pole(x, params: ChiParameters) -> np.ndarray:
    if params.cm.m == 0:
        return np.zeros(np.shape(x)[:-1], dtype=bool)
    w = np.einsum("sjb,...b->...sj", params._W, np.asarray(x, dtype=complex))
    return np.any(params.ctx.lattice_distance(w) < 1e-6, axis=(-2, -1))


def chi(x, params: ChiParameters, with_gross: bool = False):
    """Weighted permutation sum for the chi-function (unnormalised).

    ``x`` has trailing dimension M.  Where an individual term has a pole that
    cancels in the sum (a sigma subscript on the lattice) the value is
    recovered by a Richardson-extrapolated symmetric average.  With
    ``with_gross`` also returns the sum of term magnitudes, a yardstick for
    cancellation.
    """
    x = np.asarray(x, dtype=complex)
    M = params.M
    if x.shape[-1] != M:
        raise ValueError(f"expected {M} coordinates")
    for a, b in itertools.combinations(range(M), 2):
        if np.any(params.ctx.lattice_distance(x[..., a] - x[..., b]) < POLE_GUARD):
            raise PoleProximity("two coordinates coincide modulo the lattice")
    bad = _near_term_pole(x, params)
    val = np.empty(x.shape[:-1], dtype=complex)
    gross = np.empty(x.shape[:-1])
    good = ~bad
    if np.any(good):
        v, g = _chi_raw(x[good], params)
        val[good], gross[good] = v, g
    if np.any(bad):
        xb = x[bad]
        d = _POLE_STEP * np.arange(M)

        def avg(h):
            return 0.5 * (_chi_raw(xb + h * d, params)[0] + _chi_raw(xb - h * d, params)[0])

        val[bad] = (4.0 * avg(0.5) - avg(1.0)) / 3.0
        # the terms blow up like 1/step here; report the regular part instead
        gross[bad] = np.abs(val[bad])
    if with_gross:
        return (val[()], gross[()]) if val.ndim == 0 else (val, gross)
    return val[()] if val.ndim == 0 else val


def reference_point(M: int, N: float) -> np.ndarray:
    """A generic configuration: no coordinate differences at half periods."""
    return np.array([(b + 0.5) * N / M + 0.0731 * (b + 1) ** 2 + 0.37j * (b + 1) / M for b in range(M)])


def chi_normalized(x, params: ChiParameters):
    """chi divided by its value at a fixed generic reference configuration."""
    return chi(x, params) / chi(reference_point(params.M, params.ctx.omega1), params)


@dataclass(frozen=True)
class LatticeAnsatz:
    chi_params: ChiParameters
    l_ints: tuple

    @property
    def N(self) -> int:
        return int(round(self.chi_params.ctx.omega1))

    @property
    def p_tilde(self) -> np.ndarray:
        p = np.array(self.chi_params.p)
        return p - 2 * math.pi * np.array(self.l_ints) / self.N


def psi_lattice(n, ansatz: LatticeAnsatz, with_gross: bool = False):
    """Symmetrised ansatz sum over all orderings of the sites in ``n``."""
    vals, gross = psi_lattice_many([tuple(n)], ansatz)
    if with_gross:
        return vals[0], gross[0]
    return vals[0]


def psi_lattice_many(states, ansatz: LatticeAnsatz):
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    M = states.shape[1]
    perms = np.array(list(itertools.permutations(range(M))))
    xs = states[:, perms]  # (S, M!, M)
    cvals, cgross = chi(xs.astype(complex), ansatz.chi_params, with_gross=True)
    phase = np.exp(-1j * (xs @ ansatz.p_tilde))
    return (phase * cvals).sum(axis=1), (np.abs(phase) * cgross).sum(axis=1)


def psi_vector(ansatz: LatticeAnsatz, M: int | None = None):
    """ansatz amplitudes on the lexicographic sector basis, and the cancellation ratio.

    The ratio ``max|psi| / max(sum of |terms|)`` is ~1e-15 when the
    symmetrised sum vanishes identically.
    """
    M = ansatz.chi_params.M if M is None else M
    basis = sector_basis(ansatz.N, M)
    vals, gross = psi_lattice_many(basis, ansatz)
    ratio = float(np.max(np.abs(vals)) / np.max(gross)) if np.max(gross) > 0 else 0.0
    return vals, ratio


def extract_bloch_q(params: ChiParameters, beta: int, x0, n_sub: int = 8, max_sub: int = 1024) -> complex:
    """Bloch exponent q_beta from the omega2-shift of coordinate ``beta`` (0-based).

    The log of chi is continued along the shift path, doubling the number of
    steps from ``n_sub`` up to ``max_sub`` until no step turns the phase by
    more than 0.75 pi.  The result is reduced to ``0 <= Re q < 1``.
    """
    x0 = np.asarray(x0, dtype=complex)
    omega = params.ctx.omega2
    n = n_sub
    while True:
        path = np.repeat(x0[None, :], n + 1, axis=0)
        path[:, beta] += omega * np.linspace(0.0, 1.0, n + 1)
        vals = chi(path, params)
        steps = np.log(vals[1:] / vals[:-1])
        if np.all(np.abs(steps.imag) <= 0.75 * math.pi):
            break
        if 2 * n > max_sub:
            raise BranchAmbiguity(f"phase step too large along the shift path with {n} steps")
        n *= 2
    q = (steps.sum() - 1j * params.p[beta] * omega) / (2j * math.pi)
    re = q.real % 1.0
    # a tiny negative real part rounds up to exactly 1.0
    return complex(0.0 if re >= 1.0 else re, q.imag)


def q_from_t(t, cm: ColorMap, N) -> np.ndarray:
    """Bloch exponents from the t-parameters: colour-beta sum minus colour-(beta-1) sum, over N."""
    t = np.asarray(t, dtype=complex)
    c = np.array(cm.c, dtype=int)
    q = np.zeros(t.shape[:-1] + (cm.M,), dtype=complex)
    for beta in range(1, cm.M + 1):
        q[..., beta - 1] = (t[..., c == beta].sum(axis=-1) - t[..., c == beta - 1].sum(axis=-1)) / N
    return q


def continuum_residual(params: ChiParameters, E_sf: complex, x0, h_step: float = 1e-3) -> float:
    """|(-1/2 Laplacian + sum_{b != l} wp(x_b - x_l) - E) chi| / |chi| at x0, by central differences."""
    if not 1e-5 <= h_step <= 1e-2:
        raise ValueError("h_step must lie in [1e-5, 1e-2]")
    x0 = np.asarray(x0, dtype=complex)
    M = params.M
    pts = [x0]
    for b in range(M):
        e = np.zeros(M)
        e[b] = h_step
        pts += [x0 + e, x0 - e]
    vals = chi(np.array(pts), params)
    c0 = vals[0]
    lap = sum(vals[1 + 2 * b] - 2 * c0 + vals[2 + 2 * b] for b in range(M)) / h_step**2
    pot = 0.0
    for a in range(M):
        for b in range(M):
            if a != b:
                pot += wp(x0[a] - x0[b], params.ctx)
    return float(abs(-0.5 * lap + (pot - E_sf) * c0) / abs(c0))
