import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipchain.elliptic import (
    EllipticContext,
    F_kernel,
    Torus,
    exchange_prefactor,
    h_exchange,
    legendre_defect,
    log_tilde_sigma,
    rho,
    tilde_sigma,
    wp,
    wsigma,
    wsigma_product,
    wzeta,
)
from ellipchain.errors import DivisionNearZero, InvalidSite, PoleProximity
from oracles import log_sigma_oracle, wp_oracle, zeta_oracle

GRID_N = (4, 6, 8, 12)
GRID_ALPHA = (0.25, 0.5, 1.0, 2.0, 8.0)


def ctx(N, alpha, **kw):
    return EllipticContext.for_torus(N, alpha, **kw)


def random_points(N, alpha, n=20, seed=0):
    rng = np.random.default_rng(seed)
    # keep clear of the lattice so relative errors are meaningful
    re = rng.uniform(0.05, 0.95, n) * N
    im = rng.uniform(-0.45, 0.45, n) * alpha
    return re + 1j * im


def test_torus_validation():
    with pytest.raises(ValueError):
        Torus(-1.0, 1j)
    with pytest.raises(ValueError):
        Torus(1.0, 1.0 + 1j)
    with pytest.raises(ValueError):
        Torus(1.0, -2j)


def test_nome_below_one_and_truncation():
    for N in (1, 4, 12):
        for a in GRID_ALPHA:
            c = ctx(N, a)
            assert 0 < c.nome <= math.exp(-math.pi) + 1e-15
            assert c.truncation <= 65


@pytest.mark.parametrize("N", (1, 4, 6, 8, 12))
@pytest.mark.parametrize("alpha", GRID_ALPHA)
def test_legendre(N, alpha):
    assert legendre_defect(ctx(N, alpha)) < 1e-10


def test_unit_torus_eta_values():
    # square lattice: eta1 = pi/2 by symmetry together with Legendre
    c = ctx(1, 1.0)
    assert abs(c.eta1 - math.pi / 2) < 1e-12
    assert abs(c.eta2 + 1j * math.pi / 2) < 1e-12


class TestWp:
    def test_even(self):
        c = ctx(1, 1.0)
        z = 0.3 + 0.2j
        assert abs(wp(z, c) - wp(-z, c)) < 1e-12

    def test_periodic(self):
        c = ctx(6, 1.0)
        z = 0.37 + 0.11j
        assert abs(wp(z + 6, c) - wp(z, c)) < 1e-12
        assert abs(wp(z + 1j, c) - wp(z, c)) < 1e-11

    def test_square_lattice_value(self):
        c = ctx(1, 1.0)
        assert abs(wp(0.5, c) - wp_oracle(0.5, 1, 1j)) < 1e-12

    def test_pole_guard(self):
        c = ctx(6, 1.0)
        with pytest.raises(PoleProximity):
            wp(1e-10, c)
        with pytest.raises(PoleProximity):
            wp(6 + 1j + 1e-10, c)

    def test_array_input(self):
        c = ctx(6, 1.0)
        z = np.array([0.5, 1.5 + 0.2j])
        out = wp(z, c)
        assert out.shape == (2,)
        assert abs(out[1] - wp(z[1], c)) == 0


class TestZeta:
    def test_odd(self):
        c = ctx(1, 1.0)
        z = 0.2 + 0.3j
        assert abs(wzeta(-z, c) + wzeta(z, c)) < 1e-12

    def test_quasi_periodic(self):
        c = ctx(1, 1.0)
        z = 0.41
        assert abs(wzeta(z + 1, c) - wzeta(z, c) - 2 * c.eta1) < 1e-11
        c = ctx(6, 0.5)
        z = 1.3 + 0.1j
        assert abs(wzeta(z + 0.5j, c) - wzeta(z, c) - 2 * c.eta2) < 1e-10

    def test_value_on_rectangle(self):
        c = ctx(1, 2.0)
        z = 0.25
        assert abs(wzeta(z, c) - zeta_oracle(z, 1, 2j)) < 1e-8 * abs(zeta_oracle(z, 1, 2j))


class TestSigma:
    def test_zero(self):
        assert wsigma(0.0, ctx(6, 1.0)) == 0

    def test_odd(self):
        c = ctx(6, 1.0)
        z = 0.7 + 0.2j
        assert abs(wsigma(-z, c) + wsigma(z, c)) < 1e-12 * abs(wsigma(z, c))

    def test_quasi_periodic(self):
        c = ctx(1, 1.0)
        z = 0.3 + 0.4j
        lhs = wsigma(z + 1, c)
        rhs = -wsigma(z, c) * cmath.exp(2 * c.eta1 * (z + 0.5))
        assert abs(lhs - rhs) < 1e-10 * abs(rhs)

    def test_log_derivative_is_zeta(self):
        c = ctx(1, 1.0)
        z, h = 0.6, 1e-5
        fd = (cmath.log(wsigma(z + h, c)) - cmath.log(wsigma(z - h, c))) / (2 * h)
        assert abs(fd - wzeta(z, c)) < 1e-8

    @pytest.mark.parametrize("N,alpha", [(6, 1.0), (8, 0.25), (4, 8.0), (12, 0.5)])
    def test_series_and_product_agree(self, N, alpha):
        c = ctx(N, alpha)
        for z in random_points(N, alpha, 10, seed=N):
            a, b = wsigma(z, c), wsigma_product(z, c)
            assert abs(a - b) <= 1e-11 * abs(a)


@pytest.mark.parametrize("N", GRID_N)
@pytest.mark.parametrize("alpha", GRID_ALPHA)
def test_zeta_derivative_is_minus_wp(N, alpha):
    c = ctx(N, alpha)
    h = 1e-5
    for z in random_points(N, alpha, seed=7):
        fd = (wzeta(z + h, c) - wzeta(z - h, c)) / (2 * h)
        assert abs(fd + wp(z, c)) < 1e-7 * max(1.0, abs(wp(z, c)))


@pytest.mark.parametrize("N", GRID_N)
@pytest.mark.parametrize("alpha", GRID_ALPHA)
def test_against_lattice_oracle(N, alpha):
    c = ctx(N, alpha)
    for z in random_points(N, alpha, seed=N * 100 + int(alpha * 8)):
        o = wp_oracle(z, N, 1j * alpha)
        assert abs(wp(z, c) - o) <= 1e-8 * abs(o)
        o = zeta_oracle(z, N, 1j * alpha)
        assert abs(wzeta(z, c) - o) <= 1e-8 * abs(o)
        # sigma under- and overflows on elongated tori: compare logs mod 2 pi i
        d = c._log_sigma(np.complex128(z)) - log_sigma_oracle(z, N, 1j * alpha)
        d = complex(d.real, math.remainder(d.imag, 2 * math.pi))
        assert abs(d) < 1e-8


OVERLAP = [(N, a) for N in (1, 4, 8, 12) for a in (0.25, 0.5, 1.0, 2.0, 8.0)
           if max(math.exp(-math.pi * a / N), math.exp(-math.pi * N / a)) <= 0.85]


@pytest.mark.parametrize("N,alpha", OVERLAP)
def test_direct_and_swapped_agree(N, alpha):
    # only where both frames have a nome of at most 0.85
    d, s = ctx(N, alpha, mode="direct"), ctx(N, alpha, mode="swapped")
    assert abs(d.eta1 - s.eta1) < 1e-10 * abs(d.eta1)
    for z in random_points(N, alpha, 10, seed=3):
        for f in (wp, wzeta):
            a, b = f(z, d), f(z, s)
            assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_unknown_mode():
    with pytest.raises(ValueError):
        ctx(6, 1.0, mode="sideways")


class TestExchange:
    def test_symmetric(self):
        assert abs(h_exchange(3, 8, 1.0) - h_exchange(5, 8, 1.0)) < 1e-12

    def test_site_zero_rejected(self):
        with pytest.raises(InvalidSite):
            h_exchange(0, 8, 1.0)
        with pytest.raises(InvalidSite):
            h_exchange(16, 8, 1.0)

    def test_prefactor(self):
        for a in (0.25, 1.0, 8.0):
            assert abs(exchange_prefactor(a) - (a / math.pi * math.sinh(math.pi / a)) ** 2) < 1e-12 * exchange_prefactor(a)

    def test_short_range_limit(self):
        h = h_exchange(np.arange(1, 8), 8, 0.25)
        assert h[1] / h[0] < 0.01

    def test_decreasing_toward_middle(self):
        for a in (1.0, 4.0):
            h = h_exchange(np.arange(1, 5), 8, a)
            assert np.all(np.diff(h) < 0)
        # for short range the far tail sits at rounding level, possibly of either sign
        h = h_exchange(np.arange(1, 5), 8, 0.5)
        assert abs(h[0] - 1) < 1e-9 and np.all(np.abs(h[2:]) < 1e-10)

    def test_large_alpha_approaches_inverse_square(self):
        # h approaches (pi/N)^2/sin^2 only up to an alpha-dependent shift and
        # scale; the relative deviation must shrink as alpha grows
        j = np.arange(1, 8)
        trig = (math.pi / 8) ** 2 / np.sin(math.pi * j / 8) ** 2
        devs = [np.max(np.abs(h_exchange(j, 8, a) - trig) / trig) for a in (8.0, 16.0, 32.0, 64.0)]
        assert all(b < a for a, b in zip(devs, devs[1:]))

    @pytest.mark.parametrize("N", (4, 8, 12))
    def test_large_alpha_asymptotic_form(self, N):
        # the imaginary half-period zeta leaves a constant -2 pi/(N alpha);
        # what remains is of order exp(-2 pi alpha/N)
        j = np.arange(1, N)
        trig = (math.pi / N) ** 2 / np.sin(math.pi * j / N) ** 2
        for a in (2.0 * N, 4.0 * N):
            pred = exchange_prefactor(a) * (trig - 2 * math.pi / (N * a))
            assert np.max(np.abs(h_exchange(j, N, a) - pred)) < 50 * math.exp(-2 * math.pi * a / N)


class TestRho:
    def test_odd(self):
        c = ctx(6, 1.0)
        t = 0.7 + 0.2j
        assert abs(rho(-t, c) + rho(t, c)) < 1e-12

    def test_periodic(self):
        c = ctx(6, 1.0)
        assert abs(rho(1.3 + 6, c) - rho(1.3, c)) < 1e-11

    def test_composition(self):
        c = ctx(6, 1.0)
        assert abs(rho(0.5, c) - (wzeta(0.5, c) - (2 / 6) * c.eta1 * 0.5)) < 1e-13


class TestTildeSigma:
    w, t = 0.8 + 0.1j, 0.3

    def test_real_period(self):
        c = ctx(6, 1.0)
        a, b = tilde_sigma(self.w + 6, self.t, c), tilde_sigma(self.w, self.t, c)
        assert abs(a - b) < 1e-10 * abs(b)

    def test_imaginary_period(self):
        c = ctx(6, 1.0)
        a = tilde_sigma(self.w + 1j, self.t, c) * cmath.exp(-2j * math.pi * self.t / 6)
        b = tilde_sigma(self.w, self.t, c)
        assert abs(a - b) < 1e-10 * abs(b)

    @pytest.mark.parametrize("N", GRID_N)
    @pytest.mark.parametrize("alpha", GRID_ALPHA)
    def test_quasi_periodicity_grid(self, N, alpha):
        c = ctx(N, alpha)
        rng = np.random.default_rng(11)
        for _ in range(5):
            w = complex(rng.uniform(0.1, 0.9) * N, rng.uniform(-0.4, 0.4) * alpha)
            t = complex(rng.uniform(0.1, 0.9) * N, rng.uniform(-0.4, 0.4) * alpha)
            base = log_tilde_sigma(w, t, c)
            shifts = ((N, 0.0), (1j * alpha, 2j * math.pi * t / N))
            for shift, phase in shifts:
                d = log_tilde_sigma(w + shift, t, c) - base - phase
                assert abs(cmath.exp(d) - 1) < 1e-10

    def test_direct_composition_matches_product_path(self):
        c = ctx(6, 1.0)
        direct = cmath.exp(2 * c.eta1 * self.w * self.t / 6) * wsigma(self.w - self.t, c) / (
            wsigma(self.w, c) * wsigma(self.t, c))
        prod = tilde_sigma(self.w, self.t, c, product=True)
        assert abs(direct - prod) < 1e-11 * abs(prod)

    def test_division_guard(self):
        c = ctx(6, 1.0)
        with pytest.raises(DivisionNearZero):
            tilde_sigma(0.0, 0.3, c)
        with pytest.raises(DivisionNearZero):
            tilde_sigma(0.5, 6.0, c)


class TestFKernel:
    def test_even(self):
        c = ctx(6, 1.0)
        t = 0.4 + 0.3j
        assert abs(F_kernel(-t, c) - F_kernel(t, c)) < 1e-11

    def test_periodic(self):
        c = ctx(6, 1.0)
        assert abs(F_kernel(0.9 + 6, c) - F_kernel(0.9, c)) < 1e-10

    def test_composition(self):
        c = ctx(6, 1.0)
        r = wzeta(0.5, c) - (2 / 6) * c.eta1 * 0.5
        ref = -wp(0.5, c) + r * r - 4 * c.eta1 / 6
        assert abs(F_kernel(0.5, c) - ref) < 1e-13


@settings(max_examples=60, deadline=None)
@given(
    N=st.sampled_from((1, 4, 6, 8)),
    alpha=st.sampled_from((0.3, 1.0, 3.0)),
    x=st.floats(0.02, 0.98),
    y=st.floats(-0.48, 0.48),
    m=st.integers(-3, 3),
    n=st.integers(-3, 3),
)
def test_lattice_translation_laws(N, alpha, x, y, m, n):
    c = ctx(N, alpha)
    z = complex(x * N, y * alpha)
    shift = m * N + n * 1j * alpha
    w0 = wp(z, c)
    assert abs(wp(z + shift, c) - w0) <= 1e-9 * max(1.0, abs(w0))
    z0 = wzeta(z, c)
    expected = z0 + 2 * m * c.eta1 + 2 * n * c.eta2
    assert abs(wzeta(z + shift, c) - expected) <= 1e-9 * max(1.0, abs(expected))
