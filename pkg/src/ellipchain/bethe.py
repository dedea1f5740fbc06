"""Bethe-type equations for the elliptic chain: solve, evaluate energies, match to ED.

Unknowns are the pseudomomenta ``p`` (M of them) and the auxiliary
parameters ``t`` (m = M(M-1)/2).  The equations are the m t-relations and the
M closure conditions ``f(q_tilde_beta) = -i p_tilde_beta``, with the Bloch
exponents ``q`` fixed by ``t``.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import chain
from .chain import ModelParams
from .combinatorics import ColorMap, color_map
from .elliptic import POLE_GUARD, EllipticContext, exchange_prefactor
from .errors import DegenerateT, NoConvergence, NonRealEnergy, PoleProximity
from .wavefunction import ChiParameters, LatticeAnsatz, psi_vector, q_from_t

log = logging.getLogger(__name__)

TOL = 1e-10
FD_STEP = 1e-6
DEDUP_TOL = 1e-8
NULL_RATIO = 1e-8
LATTICE_TOL = 1e-7
# large |Im p| roots lose a few digits in the energy sum
ENERGY_IMAG_TOL = 1e-6


@dataclass
class BetheRoots:
    quantum_numbers: tuple
    p: np.ndarray
    t: np.ndarray
    q: np.ndarray
    q_tilde: np.ndarray
    f: np.ndarray
    eps: np.ndarray
    residual_norm: float
    E_sf: complex = 0j
    calE: complex = 0j
    E: complex = 0j
    iterations: int = 0
    lattice_residual: float = float("nan")
    raising_norm: float = float("nan")
    vector: np.ndarray | None = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return len(self.p)

    def p_tilde(self, N: int) -> np.ndarray:
        return self.p - 2 * math.pi * np.asarray(self.quantum_numbers) / N

    def momentum(self, N: int) -> int:
        return int(sum(self.quantum_numbers)) % N

    def reality_class(self) -> str:
        if np.all(np.abs(self.p.imag) < 1e-8):
            return "real"
        return "complex"


# --- the equations ---------------------------------------------------------


def _pair_coefficients(cm: ColorMap) -> np.ndarray:
    """a[j, l] = +1 for adjacent colours, -2 for same colour (l != j), else 0."""
    c = np.array(cm.c)
    a = np.zeros((cm.m, cm.m))
    d = np.abs(c[:, None] - c[None, :])
    a[d == 1] = 1.0
    same = d == 0
    np.fill_diagonal(same, False)
    a[same] = -2.0
    return a


def _rho(t, ctx: EllipticContext, guard=True):
    return ctx._zeta(t, guard) - (2.0 / ctx.omega1) * ctx.eta1 * t


def t_residual(t, p, cm: ColorMap, ctx_N: EllipticContext) -> np.ndarray:
    """t-relations: pair rho sums plus M*rho(t_j) on colour 1, minus i(p_c - p_{c+1})."""
    t = np.asarray(t, dtype=complex)
    p = np.asarray(p, dtype=complex)
    for a, b in itertools.combinations(range(cm.m), 2):
        if cm.c[a] == cm.c[b] and np.any(np.abs(t[..., a] - t[..., b]) < POLE_GUARD):
            raise DegenerateT(f"t[{a}] and t[{b}] coincide")
    return _t_residual(t, p, cm, ctx_N, guard=True)


def _t_residual(t, p, cm, ctx_N, guard=False):
    m, M = cm.m, cm.M
    out = np.zeros(t.shape, dtype=complex)
    if m == 0:
        return out
    a = _pair_coefficients(cm)
    c = np.array(cm.c)
    jj, ll = np.nonzero(a)
    if len(jj):
        r = _rho(t[..., jj] - t[..., ll], ctx_N, guard)
        for k in range(len(jj)):
            out[..., jj[k]] += a[jj[k], ll[k]] * r[..., k]
    ones = np.nonzero(c == 1)[0]
    out[..., ones] += M * _rho(t[..., ones], ctx_N, guard)
    out -= 1j * (p[..., c - 1] - p[..., c])
    return out


def f_eps(q_tilde, ctx_1: EllipticContext, guard=True):
    """Closure function ``2 q zeta_1(1/2) - zeta_1(q)`` and ``wp_1(q) / 2`` on the unit torus."""
    q = np.asarray(q_tilde, dtype=complex)
    f = 2.0 * q * ctx_1.eta1 - ctx_1._zeta(q, guard)
    e = 0.5 * ctx_1._wp(q, guard)
    if np.ndim(f) == 0:
        return f[()], e[()]
    return f, e


def q_tilde_from(t, l, cm: ColorMap, params: ModelParams) -> np.ndarray:
    return q_from_t(t, cm, params.N) + np.asarray(l) * params.omega / params.N


def closure_residual(p, t, l, cm, params: ModelParams, guard=True) -> np.ndarray:
    """``f(q_tilde_beta) + i p_tilde_beta`` for each beta."""
    qt = q_tilde_from(t, l, cm, params)
    f, _ = f_eps(qt, params.ctx_1(), guard)
    return f + 1j * (np.asarray(p) - 2 * math.pi * np.asarray(l) / params.N)


def p_closure_residual(roots: BetheRoots, params: ModelParams) -> np.ndarray:
    cm = color_map(roots.M)
    return closure_residual(roots.p, roots.t, roots.quantum_numbers, cm, params)


def p_from_t(t, l, cm, params: ModelParams, guard=True) -> np.ndarray:
    """Momenta that satisfy the closure conditions exactly for given t."""
    qt = q_tilde_from(t, l, cm, params)
    f, _ = f_eps(qt, params.ctx_1(), guard)
    return 2 * math.pi * np.asarray(l) / params.N + 1j * f


def system_residual(z, l, cm: ColorMap, params: ModelParams, guard=False) -> np.ndarray:
    """Stacked complex residual for z = (p_1..p_M, t_1..t_m); leading axes are batch axes."""
    z = np.asarray(z, dtype=complex)
    M = cm.M
    p, t = z[..., :M], z[..., M:]
    r_t = _t_residual(t, p, cm, params.ctx_N(), guard)
    r_p = closure_residual(p, t, l, cm, params, guard)
    return np.concatenate([r_t, r_p], axis=-1)


def _real(z):
    return np.concatenate([z.real, z.imag], axis=-1)


def _complex(x):
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def real_residual(x, l, cm, params) -> np.ndarray:
    """The same system over the reals: 2(m+M) equations in 2(m+M) unknowns."""
    return _real(system_residual(_complex(np.asarray(x, dtype=float)), l, cm, params))


def fd_jacobian(x, l, cm, params, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of :func:`real_residual`."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    pts = np.repeat(x[None, :], 2 * n, axis=0)
    pts[np.arange(n), np.arange(n)] += step
    pts[n + np.arange(n), np.arange(n)] -= step
    vals = real_residual(pts, l, cm, params)
    return ((vals[:n] - vals[n:]) / (2 * step)).T


def analytic_jacobian(z, l, cm: ColorMap, params: ModelParams) -> np.ndarray:
    """Complex Jacobian of :func:`system_residual`, batched over leading axes."""
    z = np.asarray(z, dtype=complex)
    M, m = cm.M, cm.m
    N = params.N
    ctxN, ctx1 = params.ctx_N(), params.ctx_1()
    p, t = z[..., :M], z[..., M:]
    Jm = np.zeros(z.shape[:-1] + (m + M, m + M), dtype=complex)
    c = np.array(cm.c)
    drho = lambda u: -ctxN._wp(u, False) - 2.0 * ctxN.eta1 / N
    if m:
        a = _pair_coefficients(cm)
        for j in range(m):
            for l2 in range(m):
                if a[j, l2] == 0:
                    continue
                d = a[j, l2] * drho(t[..., j] - t[..., l2])
                Jm[..., j, M + j] += d
                Jm[..., j, M + l2] -= d
            if c[j] == 1:
                Jm[..., j, M + j] += M * drho(t[..., j])
            Jm[..., j, c[j] - 1] += -1j
            Jm[..., j, c[j]] += 1j
    qt = q_tilde_from(t, l, cm, params)
    df = 2.0 * ctx1.eta1 + ctx1._wp(qt, False)
    for b in range(M):
        Jm[..., m + b, b] = 1j
        for k in range(m):
            coef = (float(c[k] == b + 1) - float(c[k] == b)) / N
            if coef:
                Jm[..., m + b, M + k] = df[..., b] * coef
    return Jm


# --- Newton ------------------------------------------------------------------


def _newton_batch(z0, l, cm, params, tol=TOL, max_iter=80, radius=None):
    """Damped complex Newton with analytic Jacobian on a batch of seeds.

    ``l`` is one label tuple or one row per seed.  Returns (z, residual
    inf-norm, iterations); failed members carry nan.
    """
    z = np.array(z0, dtype=complex)
    B, n = z.shape
    l = np.broadcast_to(np.asarray(l, dtype=float), (B, cm.M))
    radius = 0.25 * min(params.N, params.alpha) if radius is None else radius
    rad = np.full(B, radius)
    with np.errstate(all="ignore"):
        F = system_residual(z, l, cm, params)
        norm = np.max(np.abs(F), axis=1)
        norm[~np.isfinite(norm)] = np.inf
        iters = np.zeros(B, dtype=int)
        active = norm >= tol
        for _ in range(max_iter):
            idx = np.nonzero(active & np.isfinite(norm))[0]
            if len(idx) == 0:
                break
            Jm = analytic_jacobian(z[idx], l[idx], cm, params)
            try:
                step = np.linalg.solve(Jm, -F[idx][..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = np.stack([np.linalg.lstsq(Jm[i], -F[idx][i], rcond=None)[0] for i in range(len(idx))])
            size = np.max(np.abs(step), axis=1)
            scale = np.minimum(1.0, rad[idx] / np.where(size > 0, size, 1.0))
            accepted = np.zeros(len(idx), dtype=bool)
            lam = scale.copy()
            for _ in range(8):
                pend = np.nonzero(~accepted)[0]
                trial = z[idx[pend]] + lam[pend, None] * step[pend]
                Ft = system_residual(trial, l[idx[pend]], cm, params)
                nt = np.max(np.abs(Ft), axis=1)
                ok = np.isfinite(nt) & (nt < norm[idx[pend]])
                sel = idx[pend[ok]]
                z[sel] = trial[ok]
                F[sel] = Ft[ok]
                norm[sel] = nt[ok]
                accepted[pend[ok]] = True
                if accepted.all():
                    break
                lam[pend[~ok]] *= 0.5
            iters[idx] += 1
            rad[idx[~accepted]] *= 0.25
            dead = idx[~accepted & (rad[idx] < 1e-12)]
            norm[dead] = np.inf
            active = norm >= tol
    return z, norm, iters


def default_seed(l, cm: ColorMap, params: ModelParams) -> np.ndarray:
    """Free-magnon momenta and t spread along the real period, 0.1i per colour."""
    N = params.N
    p = 2 * math.pi * np.asarray(l, dtype=float) / N
    t = np.array([k * N / max(cm.m, 1) + 0.1j * cm.c[k] for k in range(cm.m)])
    return np.concatenate([p, t]).astype(complex)


def solve(
    l,
    params: ModelParams,
    init=None,
    tol: float = TOL,
    max_iter: int = 100,
    jacobian: str = "fd",
    continuation_steps: int = 12,
    alpha_start: float = 8.0,
) -> BetheRoots:
    """Solve the closed system for branch labels ``l``.

    ``init`` is an optional complex seed ``(p..., t...)`` at the target
    ``alpha``.  Without it the default seed is placed at ``alpha_start`` and
    followed by geometric continuation in alpha down to the target.
    ``jacobian`` selects ``"fd"`` (real stacked system, central differences)
    or ``"analytic"`` (complex Newton).
    """
    l = tuple(int(v) for v in l)
    M = len(l)
    if M > 5:
        raise ValueError("solver supports M <= 5")
    cm = color_map(M)
    if init is not None:
        path = [params.alpha]
        z = np.asarray(init, dtype=complex)
    else:
        z = default_seed(l, cm, params)
        a0 = max(alpha_start, params.alpha)
        if continuation_steps > 0 and a0 != params.alpha:
            path = list(np.geomspace(a0, params.alpha, continuation_steps + 1))
        else:
            path = [params.alpha]
    first = ModelParams(params.N, float(path[0]), params.J)
    try:
        system_residual(z, l, cm, first, guard=True)
    except PoleProximity as exc:
        raise PoleProximity(f"seed for labels {l} sits on a pole of the equations: {exc}") from exc
    total = 0
    for a in path:
        pa = ModelParams(params.N, float(a), params.J)
        z, res, it = _solve_at(z, l, cm, pa, tol, max_iter, jacobian)
        total += it
        if not res < tol:
            raise NoConvergence(f"no convergence at alpha={a:.6g} (residual {res:.3e})", iterate=z, residual=res)
    return make_roots(z, l, params, iterations=total)


def _solve_at(z, l, cm, params, tol, max_iter, jacobian):
    if jacobian == "analytic":
        zz, norm, it = _newton_batch(z[None, :], l, cm, params, tol, max_iter)
        return zz[0], float(norm[0]), int(it[0])
    if jacobian != "fd":
        raise ValueError(f"unknown jacobian {jacobian!r}")
    x = _real(z)
    r = real_residual(x, l, cm, params)
    norm = np.max(np.abs(r))
    radius = 0.25 * min(params.N, params.alpha)
    it = 0
    while norm >= tol and it < max_iter:
        it += 1
        step = np.linalg.lstsq(fd_jacobian(x, l, cm, params), -r, rcond=None)[0]
        size = np.max(np.abs(step))
        lam = min(1.0, radius / size) if size > 0 else 1.0
        for _ in range(10):
            xn = x + lam * step
            with np.errstate(all="ignore"):
                rn = real_residual(xn, l, cm, params)
            nn = np.max(np.abs(rn))
            if np.isfinite(nn) and nn < norm:
                x, r, norm = xn, rn, nn
                if lam * size >= 0.99 * radius:
                    # a full-radius step was accepted: widen the trust region
                    radius *= 2.0
                break
            lam *= 0.5
        else:
            radius *= 0.25
            if radius < 1e-12:
                break
    return _complex(x), float(norm), it


def make_roots(z, l, params: ModelParams, iterations: int = 0) -> BetheRoots:
    """Populate every derived quantity of a solution vector."""
    l = tuple(int(v) for v in l)
    M = len(l)
    cm = color_map(M)
    z = np.asarray(z, dtype=complex)
    p, t = z[:M], z[M:]
    q = q_from_t(t, cm, params.N)
    qt = q + np.asarray(l) * params.omega / params.N
    f, e = f_eps(qt, params.ctx_1())
    res = float(np.max(np.abs(system_residual(z, l, cm, params, guard=True))))
    roots = BetheRoots(l, p, t, q, qt, np.atleast_1d(f), np.atleast_1d(e), res, iterations=iterations)
    roots.E_sf, roots.calE, roots.E = energy(roots, params, check=False)
    return roots


def energy(roots: BetheRoots, params: ModelParams, check: bool = True):
    """(continuum eigenvalue, lattice eigenvalue, physical energy) of a root."""
    M = roots.M
    N = params.N
    cm = color_map(M)
    ctx = params.ctx_N()
    eta = ctx.eta1
    t = roots.t
    c = cm.c

    def F(u):
        r = ctx._zeta(u) - (2.0 / N) * eta * u
        return -ctx._wp(u) + r * r - 4.0 * eta / N

    s = 0j
    for k, l2 in itertools.combinations(range(cm.m), 2):
        if c[k] == c[l2]:
            s += 2 * F(t[k] - t[l2])
        elif abs(c[k] - c[l2]) == 1:
            s -= F(t[k] - t[l2])
    s -= M * sum(F(t[k]) for k in range(cm.m) if c[k] == 1)
    E_sf = 2 * M * (M - 1) / N * eta + np.sum(roots.p**2) / 2 - 0.5 * s
    calE = E_sf + np.sum(roots.eps)
    E = params.J * exchange_prefactor(params.alpha) * (calE + chain.energy_offset(params, M))
    if check and abs(E.imag) >= 1e-8 * max(1.0, abs(E)):
        raise NonRealEnergy(f"Im E = {E.imag:.3e}")
    return complex(E_sf), complex(calE), complex(E)


def ansatz_for(roots: BetheRoots, params: ModelParams) -> LatticeAnsatz:
    cm = color_map(roots.M)
    cp = ChiParameters(tuple(roots.p), tuple(roots.t), cm, params.ctx_N())
    return LatticeAnsatz(cp, tuple(roots.quantum_numbers))


def lattice_vector(roots: BetheRoots, params: ModelParams):
    """Normalised lattice eigenvector from the ansatz and its cancellation ratio."""
    vec, ratio = psi_vector(ansatz_for(roots, params))
    nrm = np.linalg.norm(vec)
    return (vec / nrm if nrm > 0 else vec), ratio


# --- enumeration and matching ----------------------------------------------


def quantum_number_tuples(N: int, M: int, l_range=None):
    """Non-decreasing M-tuples drawn from ``l_range`` (default 0..N-1)."""
    values = sorted(set(range(N) if l_range is None else l_range))
    return list(itertools.combinations_with_replacement(values, M))


def seed_batch(l, cm: ColorMap, params: ModelParams, n_random: int = 32, seed: int = 0) -> np.ndarray:
    """Deterministic multi-start seeds for one label tuple.

    Three scrambled Sobol families of ``n_random`` points each for the
    t-parameters: mirrored clusters (each colour spread symmetrically about
    Re t = 0 or N/2 at a common height), a cloud near the origin, and the
    whole fundamental rectangle.  Momenta are then set from the closure
    conditions.
    """
    N, a = params.N, params.alpha
    m = cm.m
    if m == 0:
        return default_seed(l, cm, params)[None, :]
    sob = qmc.Sobol(2 * m, scramble=True, seed=seed).random(n_random)
    u, v = sob[:, :m], sob[:, m:] - 0.5
    ts = []
    # mirrored clusters
    sym = np.zeros((n_random, m), dtype=complex)
    for k in sorted(set(cm.c)):
        fib = cm.fiber(k)
        s = len(fib)
        offs = np.arange(s) - 0.5 * (s - 1)
        width = u[:, fib[0]][:, None]
        height = v[:, fib[0]][:, None] * 2 * a
        sym[:, fib] = width * offs + 1j * height
    flip = (u[:, -1] > 0.5)[:, None] * (0.5 * N) * (np.array(cm.c) == cm.M - 1)
    ts.append(sym + flip)
    ts.append((2 * u - 1) + 1j * v * a)
    ts.append((u - 0.5) * N + 1j * v * a)
    t = np.concatenate(ts, axis=0)
    with np.errstate(all="ignore"):
        p = p_from_t(t, l, cm, params, guard=False)
    z = np.concatenate([p, t], axis=1)
    return z[np.all(np.isfinite(z), axis=1)]


@dataclass
class MatchReport:
    N: int
    M: int
    alpha: float
    roots: list = field(default_factory=list)
    matched: list = field(default_factory=list)  # (root index, ED index, deviation)
    unmatched: list = field(default_factory=list)  # root indices with no ED partner
    quarantined: list = field(default_factory=list)  # (roots, reason)
    null_roots: int = 0
    duplicates: int = 0
    failures: int = 0
    hw_levels: int = 0
    hw_reached: int = 0
    max_deviation: float = 0.0
    matched_highest_weight: int = 0
    classes: dict = field(default_factory=dict)

    @property
    def hw_fraction(self) -> float:
        return self.hw_reached / self.hw_levels if self.hw_levels else 1.0


def _ptilde_distance(a: BetheRoots, b: BetheRoots, N: int) -> float:
    """Smallest distance between the two p-tilde multisets, real parts mod 2 pi."""
    pa, pb = a.p_tilde(N), b.p_tilde(N)
    best = np.inf
    for perm in itertools.permutations(range(len(pb))):
        d = pa - pb[list(perm)]
        dist = np.abs(np.angle(np.exp(1j * d.real))) + np.abs(d.imag)
        best = min(best, float(np.max(dist, initial=0.0)))
    return best


def _same_root(a: BetheRoots, b: BetheRoots, N: int, tol: float = DEDUP_TOL) -> bool:
    if abs(a.E - b.E) > tol * max(1.0, abs(a.E)) or a.momentum(N) != b.momentum(N):
        return False
    return _ptilde_distance(a, b, N) < 1e-6


def find_roots(params: ModelParams, M: int, l_range=None, n_random: int = 32, tol: float = TOL):
    """All distinct non-null roots reachable from the seed batches.

    Every kept root has an ansatz vector that solves the lattice equation to
    ``LATTICE_TOL``.  Returns (roots, stats) where stats counts null,
    duplicate and failed seeds and lists quarantined roots.
    """
    cm = color_map(M)
    N = params.N
    L = chain.lattice_operator(params, M)[0]
    S_plus = chain.raising_matrix(N, M)
    found: list[BetheRoots] = []
    nulls: list[BetheRoots] = []
    stats = {"null": 0, "duplicates": 0, "failures": 0, "complex_energy": 0, "quarantined": []}
    seeds, labels = [], []
    for l in quantum_number_tuples(N, M, l_range):
        if M == 1:
            z0 = default_seed(l, cm, params)[None, :]
            with np.errstate(all="ignore"):
                z0[0, 0] = p_from_t(np.zeros(0), l, cm, params, guard=False)[0]
        else:
            z0 = seed_batch(l, cm, params, n_random)
        if len(z0) == 0:
            stats["failures"] += 1
            continue
        seeds.append(z0)
        labels.append(np.repeat(np.asarray(l, dtype=float)[None, :], len(z0), axis=0))
    if not seeds:
        return found, stats
    z_all, l_all = np.concatenate(seeds), np.concatenate(labels)
    z_all, norm_all = _newton_chunked(z_all, l_all, cm, params, tol)
    log.debug("newton done on %d seeds", len(z_all))
    for l in quantum_number_tuples(N, M, l_range):
        rows = np.all(l_all == np.asarray(l, dtype=float), axis=1)
        if not np.any(rows):
            continue
        z, norm = z_all[rows], norm_all[rows]
        ok = norm < tol
        stats["failures"] += int(np.sum(~ok))
        for zz in _unique_vectors(z[ok]):
            try:
                r = make_roots(zz, l, params)
            except (PoleProximity, DegenerateT, ZeroDivisionError, ValueError):
                stats["failures"] += 1
                continue
            if abs(r.E.imag) >= ENERGY_IMAG_TOL * max(1.0, abs(r.E)):
                # a non-null eigenvector of the Hermitian chain has real energy
                stats["complex_energy"] += 1
                continue
            if any(_same_root(r, f, N) for f in found):
                stats["duplicates"] += 1
                continue
            if any(_same_root(r, f, N) for f in nulls):
                stats["null"] += 1
                continue
            try:
                vec, ratio = lattice_vector(r, params)
            except (PoleProximity, DegenerateT, ZeroDivisionError, ValueError):
                stats["failures"] += 1
                continue
            if not np.all(np.isfinite(vec)):
                stats["failures"] += 1
                continue
            if ratio < NULL_RATIO:
                stats["null"] += 1
                nulls.append(r)
                continue
            res = float(np.max(np.abs(L @ vec - r.calE * vec)) / np.max(np.abs(vec)))
            r.lattice_residual = res
            if res >= LATTICE_TOL:
                stats["quarantined"].append((r, f"lattice residual {res:.2e}"))
                continue
            r.vector = vec
            r.raising_norm = float(np.linalg.norm(S_plus @ vec))
            if _in_span(r, found, N):
                stats["duplicates"] += 1
                continue
            found.append(r)
    return found, stats


def _in_span(r: BetheRoots, found: list, N: int, tol: float = 1e-6) -> bool:
    """True when r's vector lies in the span of found vectors at the same E and momentum.

    Distinct label tuples can produce the same lattice state, so equality of
    p-tilde is not enough to detect repeats.
    """
    same = [f.vector for f in found
            if f.momentum(N) == r.momentum(N) and abs(f.E - r.E) <= 1e-6 * max(1.0, abs(r.E))]
    if not same:
        return False
    Q, _ = np.linalg.qr(np.stack(same, axis=1))
    v = r.vector / np.linalg.norm(r.vector)
    return bool(np.linalg.norm(v - Q @ (Q.conj().T @ v)) < tol)


def _reduced(t, l, cm, params):
    p = p_from_t(t, l, cm, params, guard=False)
    return np.concatenate([p, t], axis=-1), _t_residual(t, p, cm, params.ctx_N())


def _newton_reduced(t0, l, cm, params, tol=TOL, max_iter=40, radius=None):
    """Damped Newton on the t-relations alone, momenta eliminated through closure.

    The reduced Jacobian is the Schur complement of the closure block of
    :func:`analytic_jacobian`.  Returns the full vectors (p, t) and the
    residual inf-norm per seed (inf on failure).
    """
    t = np.array(t0, dtype=complex)
    B, m = t.shape
    M = cm.M
    l = np.broadcast_to(np.asarray(l, dtype=float), (B, M))
    radius = 0.25 * min(params.N, params.alpha) if radius is None else radius
    rad = np.full(B, radius)
    with np.errstate(all="ignore"):
        z, F = _reduced(t, l, cm, params)
        norm = np.max(np.abs(F), axis=1)
        norm[~np.isfinite(norm)] = np.inf
        for _ in range(max_iter):
            idx = np.nonzero((norm >= tol) & np.isfinite(norm))[0]
            if len(idx) == 0:
                break
            Jf = analytic_jacobian(z[idx], l[idx], cm, params)
            Jr = Jf[:, :m, M:] + Jf[:, :m, :M] @ (1j * Jf[:, m:, M:])
            try:
                step = np.linalg.solve(Jr, -F[idx][..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = np.stack([np.linalg.lstsq(Jr[i], -F[idx][i], rcond=None)[0] for i in range(len(idx))])
            size = np.max(np.abs(step), axis=1)
            lam = np.minimum(1.0, rad[idx] / np.where(size > 0, size, 1.0))
            accepted = np.zeros(len(idx), dtype=bool)
            for _ in range(6):
                pend = np.nonzero(~accepted)[0]
                trial = t[idx[pend]] + lam[pend, None] * step[pend]
                zt, Ft = _reduced(trial, l[idx[pend]], cm, params)
                nt = np.max(np.abs(Ft), axis=1)
                ok = np.isfinite(nt) & (nt < norm[idx[pend]])
                sel = idx[pend[ok]]
                t[sel], z[sel], F[sel], norm[sel] = trial[ok], zt[ok], Ft[ok], nt[ok]
                accepted[pend[ok]] = True
                if accepted.all():
                    break
                lam[pend[~ok]] *= 0.5
            rad[idx[~accepted]] *= 0.25
            norm[idx[~accepted & (rad[idx] < 1e-12)]] = np.inf
        # closure holds by construction up to rounding; report the full system
        full = np.max(np.abs(system_residual(z, l, cm, params)), axis=1)
    full[~np.isfinite(full)] = np.inf
    return z, np.where(norm < tol, full, np.inf)


def _newton_chunked(z, l, cm, params, tol, chunk: int = 4096):
    out_z, out_n = np.empty_like(z), np.empty(len(z))
    for a in range(0, len(z), chunk):
        if cm.m:
            zz, nn = _newton_reduced(z[a:a + chunk, cm.M:], l[a:a + chunk], cm, params, tol)
        else:
            zz, nn, _ = _newton_batch(z[a:a + chunk], l[a:a + chunk], cm, params, tol)
        out_z[a:a + chunk], out_n[a:a + chunk] = zz, nn
    return out_z, out_n


def _unique_vectors(z, tol=1e-7):
    out = []
    for v in z:
        if not any(np.max(np.abs(v - u)) < tol for u in out):
            out.append(v)
    return out


def enumerate_and_match(params: ModelParams, M: int, l_range=None, n_random: int = 32, spectrum=None) -> MatchReport:
    """Scan labels, solve, deduplicate and match to ED highest-weight levels.

    A root matches an ED level in the same momentum sector when the energies
    agree to 1e-6 relative; each ED level is used at most once.
    """
    N = params.N
    if spectrum is None:
        spectrum = chain.diagonalize(chain.build_hamiltonian(params, M))
    roots, stats = find_roots(params, M, l_range, n_random)
    rep = MatchReport(N, M, params.alpha, roots=roots)
    rep.null_roots = stats["null"]
    rep.duplicates = stats["duplicates"]
    rep.failures = stats["failures"]
    rep.quarantined = stats["quarantined"]
    hw = np.nonzero(spectrum.highest_weight)[0] if M > 0 else np.array([0])
    rep.hw_levels = len(hw)
    used = set()
    for i, r in enumerate(roots):
        k = r.momentum(N)
        best, bestd = None, np.inf
        for j in range(len(spectrum.eigenvalues)):
            if j in used or spectrum.momentum_labels[j] != k:
                continue
            d = abs(spectrum.eigenvalues[j] - r.E.real)
            if d < bestd:
                best, bestd = j, d
        if best is not None and bestd < 1e-6 * max(1.0, abs(r.E)):
            used.add(best)
            rep.matched.append((i, best, float(bestd)))
            if spectrum.highest_weight[best]:
                rep.matched_highest_weight += 1
        else:
            rep.unmatched.append(i)
        cls = r.reality_class()
        rep.classes[cls] = rep.classes.get(cls, 0) + 1
    rep.hw_reached = sum(1 for _, j, _ in rep.matched if spectrum.highest_weight[j])
    rep.max_deviation = max((d for _, _, d in rep.matched), default=0.0)
    return rep


def vacuum_root(params: ModelParams) -> BetheRoots:
    """The fully polarised state, the M = 0 member of every union."""
    e = np.zeros(0, dtype=complex)
    r = BetheRoots((), e, e, e, e, e, e, 0.0, 0j, 0j, 0j, lattice_residual=0.0, raising_norm=0.0)
    r.vector = np.ones(1, dtype=complex)
    return r


@dataclass
class UnionReport:
    """Coverage of a full ED sector by Bethe states of all M' <= M."""

    N: int
    M: int
    alpha: float
    roots: dict = field(default_factory=dict)  # M' -> list of roots
    assignment: list = field(default_factory=list)  # (M', root index, ED index, deviation)
    levels: int = 0
    max_deviation: float = 0.0
    max_raising_norm: float = 0.0
    extra: list = field(default_factory=list)  # (M', root index) with no free ED partner

    @property
    def covered(self) -> int:
        return len(self.assignment)

    @property
    def complete(self) -> bool:
        return self.covered == self.levels


def union_match(params: ModelParams, M: int, l_range=None, n_random: int = 32, spectrum=None) -> UnionReport:
    """Match the union of Bethe roots for M' = 0..M against the whole sector-M spectrum.

    A root of M' < M stands for its SU(2) descendant in sector M, so it
    claims one ED level there with the same energy and momentum.
    """
    N = params.N
    if spectrum is None:
        spectrum = chain.diagonalize(chain.build_hamiltonian(params, M))
    rep = UnionReport(N, M, params.alpha, levels=len(spectrum.eigenvalues))
    rep.roots[0] = [vacuum_root(params)]
    for Mp in range(1, M + 1):
        rep.roots[Mp] = find_roots(params, Mp, l_range, n_random)[0]
    used = set()
    for Mp in range(M + 1):
        for i, r in enumerate(rep.roots[Mp]):
            k = r.momentum(N) if Mp else 0
            E = float(r.E.real)
            cand = [j for j in range(len(spectrum.eigenvalues))
                    if j not in used and spectrum.momentum_labels[j] == k]
            if cand:
                j = min(cand, key=lambda jj: abs(spectrum.eigenvalues[jj] - E))
                d = abs(spectrum.eigenvalues[j] - E)
                if d < 1e-6 * max(1.0, abs(E)):
                    used.add(j)
                    rep.assignment.append((Mp, i, j, float(d)))
                    if Mp:
                        rep.max_raising_norm = max(rep.max_raising_norm, r.raising_norm)
                    continue
            rep.extra.append((Mp, i))
    rep.max_deviation = max((a[3] for a in rep.assignment), default=0.0)
    return rep


def continue_roots(roots: list, params: ModelParams, alpha_to: float, steps: int = 4, tol: float = TOL):
    """Carry roots of one M from ``params.alpha`` to ``alpha_to`` in geometric substeps.

    At every substep the ansatz vector is rebuilt and must stay non-null and
    solve the lattice equation to ``LATTICE_TOL``; a branch that runs into a
    degenerate point is dropped there.  Returns (new roots with None where
    tracking stopped, substep alphas, energies of shape
    (len(roots), steps + 1) with nan once lost).
    """
    alphas = np.geomspace(params.alpha, alpha_to, steps + 1)
    energies = np.full((len(roots), steps + 1), np.nan)
    if not roots:
        return [], alphas, energies
    M = roots[0].M
    cm = color_map(M)
    z = np.stack([np.concatenate([r.p, r.t]) for r in roots]).astype(complex)
    l = np.array([r.quantum_numbers for r in roots], dtype=float)
    alive = np.ones(len(roots), dtype=bool)
    energies[:, 0] = [r.E.real for r in roots]
    out = [None] * len(roots)
    for s, a in enumerate(alphas[1:], start=1):
        pa = ModelParams(params.N, float(a), params.J)
        L = chain.lattice_operator(pa, M)[0]
        idx = np.nonzero(alive)[0]
        if len(idx) == 0:
            break
        zz, norm, _ = _newton_batch(z[idx], l[idx], cm, pa, tol)
        for k, i in enumerate(idx):
            alive[i] = False
            if not norm[k] < tol:
                continue
            try:
                r = make_roots(zz[k], roots[i].quantum_numbers, pa)
                vec, ratio = lattice_vector(r, pa)
            except (PoleProximity, DegenerateT, ZeroDivisionError, ValueError):
                continue
            if ratio < NULL_RATIO or not np.all(np.isfinite(vec)):
                continue
            res = float(np.max(np.abs(L @ vec - r.calE * vec)) / np.max(np.abs(vec)))
            if res >= LATTICE_TOL or abs(r.E.imag) >= ENERGY_IMAG_TOL * max(1.0, abs(r.E)):
                continue
            r.lattice_residual, r.vector = res, vec
            alive[i] = True
            z[i] = zz[k]
            energies[i, s] = r.E.real
            if s == steps:
                out[i] = r
    return out, alphas, energies
