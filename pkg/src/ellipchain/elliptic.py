"""Weierstrass functions on rectangular tori via theta-function q-series.

The lattice is ``Z*omega1 + Z*omega2`` with ``omega1 > 0`` real and
``omega2 = i*alpha``.  Every evaluation reduces its argument into the
fundamental rectangle centred at the origin, evaluates the Jacobi theta
function ``theta_1`` and its derivatives there, and restores the result
with the (quasi-)periodicity laws.  When the real period is much longer
than the imaginary one the nome approaches one; the lattice is then rotated
by ``-i`` (which swaps the roles of the periods) and evaluated in that frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivisionNearZero, InvalidSite, PoleProximity

POLE_GUARD = 1e-8
MAX_TERMS = 64
# Swap frames whenever the rotated frame has the smaller nome, so the nome
# used for the series never exceeds exp(-pi).
SWAP_NOME = math.exp(-math.pi)


@dataclass(frozen=True)
class Torus:
    omega1: float
    omega2: complex

    def __post_init__(self):
        w1 = complex(self.omega1)
        w2 = complex(self.omega2)
        if w1.imag != 0.0 or w1.real <= 0.0:
            raise ValueError(f"omega1 must be real and positive, got {self.omega1!r}")
        if w2.real != 0.0 or w2.imag <= 0.0:
            raise ValueError(f"omega2 must be purely imaginary with Im > 0, got {self.omega2!r}")
        object.__setattr__(self, "omega1", w1.real)
        object.__setattr__(self, "omega2", w2)

    @property
    def alpha(self) -> float:
        return self.omega2.imag


class _Frame:
    """Theta-series evaluator for the lattice ``Z*P + Z*iA`` (P, A > 0)."""

    def __init__(self, P: float, A: float):
        self.P = float(P)
        self.A = float(A)
        self.nome = math.exp(-math.pi * self.A / self.P)
        # after reduction |Im v| <= pi*A/(2P), so term n is bounded by |q|^(n^2 - 1/4)
        k = 1
        while self.nome ** (k * k) >= 1e-17 * self.nome**0.25 and k < MAX_TERMS:
            k += 1
        self.terms = k + 1
        n = np.arange(self.terms)
        self._k = (2 * n + 1).astype(float)
        self._c = 2.0 * (-1.0) ** n * self.nome ** ((n + 0.5) ** 2)
        dtheta0 = np.sum(self._c * self._k)
        d3theta0 = -np.sum(self._c * self._k**3)
        self.dtheta0 = dtheta0
        self.eta_real = -(math.pi**2) * d3theta0 / (6.0 * self.P * dtheta0)
        # eta along the imaginary period, from the theta series at iA/2
        th, dth, _ = self._theta(np.array([0.5j * math.pi * self.A / self.P]))
        self.eta_imag = complex(
            self.eta_real * 1j * self.A / self.P + (math.pi / self.P) * dth[0] / th[0]
        )

    def _theta(self, v):
        kv = np.multiply.outer(v, self._k)
        s = np.sin(kv)
        c = np.cos(kv)
        th = s @ self._c
        dth = c @ (self._c * self._k)
        d2th = -(s @ (self._c * self._k**2))
        return th, dth, d2th

    def reduce(self, z):
        m = np.round(z.real / self.P)
        n = np.round(z.imag / self.A)
        zr = z - m * self.P - 1j * n * self.A
        return zr, m, n

    def check_pole(self, zr):
        if np.any(np.abs(zr) < POLE_GUARD):
            raise PoleProximity("argument within pole guard of a lattice point")

    def wp(self, z, guard=True):
        zr, _, _ = self.reduce(z)
        if guard:
            self.check_pole(zr)
        th, dth, d2th = self._theta(np.pi * zr / self.P)
        r = dth / th
        return -2.0 * self.eta_real / self.P - (np.pi / self.P) ** 2 * (d2th / th - r * r)

    def zeta(self, z, guard=True):
        zr, m, n = self.reduce(z)
        if guard:
            self.check_pole(zr)
        th, dth, _ = self._theta(np.pi * zr / self.P)
        base = 2.0 * self.eta_real * zr / self.P + (np.pi / self.P) * dth / th
        return base + 2.0 * m * self.eta_real + 2.0 * n * self.eta_imag

    def _log_shift(self, zr, m, n):
        # sigma(zr + a) = (-1)^(m+n+mn) exp((2m eta_P + 2n eta_A)(zr + a/2)) sigma(zr)
        shift = m * self.P + 1j * n * self.A
        eta = 2.0 * m * self.eta_real + 2.0 * n * self.eta_imag
        odd = (m + n + m * n) % 2
        return eta * (zr + 0.5 * shift) + 1j * np.pi * odd

    def log_sigma(self, z):
        """A branch of log(sigma); only its exponential is meaningful."""
        zr, m, n = self.reduce(z)
        th, _, _ = self._theta(np.pi * zr / self.P)
        with np.errstate(divide="ignore"):
            base = np.log(self.P / np.pi) + self.eta_real * zr * zr / self.P + np.log(th / self.dtheta0)
        return base + self._log_shift(zr, m, n)

    def log_sigma_product(self, z):
        """log(sigma) from the Jacobi triple product of theta_1 (no sine series)."""
        zr, m, n = self.reduce(z)
        v = np.pi * zr / self.P
        q2 = self.nome**2
        acc = np.zeros_like(v)
        k = 1
        while q2**k > 1e-18:
            acc = acc + np.log((1.0 - 2.0 * q2**k * np.cos(2 * v) + q2 ** (2 * k)) / (1.0 - q2**k) ** 2)
            k += 1
        with np.errstate(divide="ignore"):
            base = np.log(self.P / np.pi) + self.eta_real * zr * zr / self.P + np.log(np.sin(v)) + acc
        return base + self._log_shift(zr, m, n)


@dataclass(frozen=True)
class EllipticContext:
    """Immutable evaluation backend for one torus.

    ``eta1 = zeta(omega1/2)`` and ``eta2 = zeta(omega2/2)`` are computed once.
    ``mode`` is ``"direct"`` or ``"swapped"``; pass ``mode=`` to force one.
    """

    torus: Torus
    mode: str = ""
    swap_nome: float = SWAP_NOME
    _frame: _Frame = field(init=False, repr=False, compare=False)
    _lam: complex = field(init=False, repr=False, compare=False)
    _eta: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        P, A = self.torus.omega1, self.torus.alpha
        mode = self.mode
        if not mode:
            mode = "direct" if math.exp(-math.pi * A / P) <= self.swap_nome else "swapped"
        if mode == "direct":
            frame, lam = _Frame(P, A), 1.0 + 0j
        elif mode == "swapped":
            # -i * (Z P + Z iA) = Z A + Z (iP)
            frame, lam = _Frame(A, P), -1j
        else:
            raise ValueError(f"unknown mode {mode!r}")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "_frame", frame)
        object.__setattr__(self, "_lam", lam)
        half = np.array([0.5 * self.omega1, 0.5 * self.omega2], dtype=complex)
        object.__setattr__(self, "_eta", tuple(complex(e) for e in self._zeta(half)))

    @classmethod
    def for_torus(cls, omega1, alpha, **kw) -> "EllipticContext":
        return cls(Torus(omega1, 1j * alpha), **kw)

    @property
    def omega1(self) -> float:
        return self.torus.omega1

    @property
    def omega2(self) -> complex:
        return self.torus.omega2

    @property
    def nome(self) -> float:
        """Nome of the frame actually used for the series."""
        return self._frame.nome

    @property
    def truncation(self) -> int:
        return self._frame.terms

    @property
    def eta1(self) -> complex:
        return self._eta[0]

    @property
    def eta2(self) -> complex:
        return self._eta[1]

    def _wp(self, z, guard=True):
        lam = self._lam
        return lam * lam * self._frame.wp(lam * z, guard)

    def _zeta(self, z, guard=True):
        lam = self._lam
        return lam * self._frame.zeta(lam * z, guard)

    def _log_sigma(self, z, product=False):
        lam = self._lam
        f = self._frame.log_sigma_product if product else self._frame.log_sigma
        # sigma(z) = sigma'(lam z) / lam
        return f(lam * z) - np.log(lam)

    def _sigma(self, z, product=False):
        return np.exp(self._log_sigma(z, product))

    def lattice_distance(self, z):
        """Distance from z to the nearest lattice point."""
        zr, _, _ = self._frame.reduce(self._lam * z)
        return np.abs(zr)


def _wrap(fn):
    def inner(z, ctx: EllipticContext, *args, **kw):
        arr = np.asarray(z, dtype=complex)
        out = fn(arr, ctx, *args, **kw)
        return out[()] if np.ndim(out) == 0 else out

    inner.__name__ = fn.__name__
    inner.__doc__ = fn.__doc__
    return inner


@_wrap
def wp(z, ctx):
    """Weierstrass p-function. Raises PoleProximity near the lattice."""
    return ctx._wp(z)


@_wrap
def wzeta(z, ctx):
    """Weierstrass zeta; ``zeta(z + omega1) = zeta(z) + 2*eta1``."""
    return ctx._zeta(z)


@_wrap
def wsigma(z, ctx):
    return ctx._sigma(z)


@_wrap
def wsigma_product(z, ctx):
    """Second, independent evaluation of sigma through the triple product."""
    return ctx._sigma(z, product=True)


@_wrap
def rho(t, ctx):
    """``zeta(t) - (2/omega1) * eta1 * t``: odd and periodic in the real period."""
    return ctx._zeta(t) - (2.0 / ctx.omega1) * ctx.eta1 * t


def log_tilde_sigma(w, t, ctx: EllipticContext, product=False):
    """A branch of ``log tilde_sigma(w, t)``; see :func:`tilde_sigma`."""
    w = np.asarray(w, dtype=complex)
    t = np.asarray(t, dtype=complex)
    if np.any(ctx.lattice_distance(w) < POLE_GUARD) or np.any(ctx.lattice_distance(t) < POLE_GUARD):
        raise DivisionNearZero("sigma(w) or sigma(t) vanishes")
    return (
        (2.0 / ctx.omega1) * ctx.eta1 * w * t
        + ctx._log_sigma(w - t, product)
        - ctx._log_sigma(w, product)
        - ctx._log_sigma(t, product)
    )


def tilde_sigma(w, t, ctx: EllipticContext, product=False):
    """``exp(2 eta1 w t / omega1) * sigma(w - t) / (sigma(w) sigma(t))``.

    Periodic in ``w`` under the real period and picks up ``exp(2 pi i t / omega1)``
    under ``w -> w + omega2``.  Assembled in log space: sigma itself under- and
    overflows along the long period.
    """
    out = np.exp(log_tilde_sigma(w, t, ctx, product))
    return out[()] if np.ndim(out) == 0 else out


@_wrap
def F_kernel(t, ctx):
    """Pair kernel of the continuum energy: ``-wp(t) + rho(t)**2 - 4 eta1 / omega1``."""
    r = ctx._zeta(t) - (2.0 / ctx.omega1) * ctx.eta1 * t
    return -ctx._wp(t) + r * r - 4.0 * ctx.eta1 / ctx.omega1


def exchange_prefactor(alpha: float) -> float:
    """``(omega/pi * sin(pi/omega))**2`` at ``omega = i*alpha``; equals ``(alpha/pi*sinh(pi/alpha))**2``."""
    omega = 1j * alpha
    pref = (omega / math.pi * np.sin(math.pi / omega)) ** 2
    if abs(pref.imag) > 1e-12 * abs(pref):
        raise ArithmeticError(f"exchange prefactor not real: {pref!r}")
    return float(pref.real)


def h_exchange(j, N: int, alpha: float, ctx: EllipticContext | None = None):
    """Elliptic exchange ``h(j)`` on the chain of ``N`` sites.

    ``j`` may be an int or an integer array; ``j = 0 (mod N)`` is rejected.
    """
    if ctx is None:
        ctx = EllipticContext.for_torus(N, alpha)
    jj = np.asarray(j)
    if np.any(jj % N == 0):
        raise InvalidSite(f"h(j) undefined for j = 0 mod N (N={N})")
    omega = 1j * alpha
    val = exchange_prefactor(alpha) * (ctx._wp(jj.astype(complex)) + (2.0 / omega) * ctx.eta2)
    if np.any(np.abs(np.imag(val)) > 1e-12 * np.maximum(1.0, np.abs(val))):
        raise ArithmeticError("exchange h(j) acquired an imaginary part")
    out = np.real(val)
    return float(out) if np.ndim(out) == 0 else out


def legendre_defect(ctx: EllipticContext) -> float:
    """``|eta1*omega2 - eta2*omega1 - i*pi|``; zero up to rounding."""
    return abs(ctx.eta1 * ctx.omega2 - ctx.eta2 * ctx.omega1 - 1j * math.pi)
