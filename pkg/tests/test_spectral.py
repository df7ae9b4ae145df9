import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqgdet.spectral import (
    Grid,
    GridMismatchError,
    HermitianError,
    PhysicalField,
    SpectralField,
    fractional_laplacian,
    inner_coeffs,
    lp_norm,
    nonlinear_term,
    random_field,
    riesz_velocity,
    to_physical,
    to_spectral,
)


def cos_mode(grid, k=(1, 0), amp=1.0):
    return SpectralField.from_modes(grid, [(k, amp, 0.0)])


@pytest.mark.parametrize("L", [1.0, 2.5])
def test_single_mode_is_cosine(L):
    g = Grid(32, L)
    x1, _ = g.coords
    v = to_physical(cos_mode(g)).values
    np.testing.assert_allclose(v, np.cos(2 * np.pi * x1 / L), atol=1e-14)
    c = cos_mode(g).coeffs
    assert c[1, 0] == pytest.approx(0.5) and c[-1, 0] == pytest.approx(0.5)


def test_round_trip():
    g = Grid(64)
    f = random_field(g, 1, 20, 1.0, seed=4)
    back = to_spectral(to_physical(f))
    assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-12


def test_parseval():
    g = Grid(64, 3.0)
    f = random_field(g, 1, 20, 2.0, seed=1)
    direct = lp_norm(to_physical(f), 2)
    assert abs(direct - f.l2_norm()) < 1e-10 * direct


def test_mean_is_removed_and_shapes_checked():
    g = Grid(16)
    c = np.ones(g.spectral_shape, complex)
    assert SpectralField(g, c).coeffs[0, 0] == 0
    with pytest.raises(GridMismatchError):
        SpectralField(g, np.zeros((16, 16)))
    with pytest.raises(GridMismatchError):
        cos_mode(g) + cos_mode(Grid(32))
    with pytest.raises(ValueError):
        Grid(15)


def test_non_hermitian_rejected():
    g = Grid(16)
    c = np.zeros(g.spectral_shape, complex)
    c[1, 0] = 1.0
    with pytest.raises(HermitianError):
        to_physical(SpectralField(g, c))


def test_physical_field_rejects_nan():
    g = Grid(8)
    v = np.zeros((8, 8))
    v[0, 0] = np.nan
    with pytest.raises(ValueError):
        PhysicalField(g, v)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.7])
def test_fractional_laplacian_symbol(alpha):
    L = 2.0
    g = Grid(32, L)
    th = cos_mode(g)
    out = fractional_laplacian(th, alpha)
    np.testing.assert_allclose(out.coeffs, (2 * np.pi / L) ** alpha * th.coeffs, rtol=1e-14)
    np.testing.assert_array_equal(fractional_laplacian(th, 0).coeffs, th.coeffs)


def test_fractional_laplacian_composes():
    g = Grid(32)
    th = random_field(g, 1, 10, 1.0, seed=2)
    a = 1.3
    twice = fractional_laplacian(fractional_laplacian(th, a / 2), a / 2)
    once = fractional_laplacian(th, a)
    assert np.max(np.abs(twice.coeffs - once.coeffs)) < 1e-12 * np.max(np.abs(once.coeffs))


def test_riesz_velocity_of_cosine():
    g = Grid(32)
    x1, _ = g.coords
    u1, u2 = riesz_velocity(cos_mode(g))
    np.testing.assert_allclose(to_physical(u1).values, 0, atol=1e-14)
    np.testing.assert_allclose(to_physical(u2).values, -np.sin(2 * np.pi * x1), atol=1e-14)
    z1, z2 = riesz_velocity(SpectralField.zeros(g))
    assert not np.any(z1.coeffs) and not np.any(z2.coeffs)


def test_riesz_velocity_divergence_free():
    g = Grid(64)
    u1, u2 = riesz_velocity(random_field(g, 1, 30, 1.0, seed=3))
    div = g.k1 * u1.coeffs + g.k2 * u2.coeffs
    scale = np.sqrt(np.sum(np.abs(u1.coeffs) ** 2 + np.abs(u2.coeffs) ** 2))
    assert np.max(np.abs(div)) < 1e-13 * scale


def test_nonlinear_term_single_mode_and_zero():
    g = Grid(32)
    assert np.max(np.abs(nonlinear_term(cos_mode(g, (2, 0))).coeffs)) < 1e-14
    assert not np.any(nonlinear_term(SpectralField.zeros(g)).coeffs)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), kmax=st.floats(2, 20))
def test_nonlinear_term_energy_neutral(seed, kmax):
    g = Grid(64)
    th = random_field(g, 1, kmax, 1.0, seed)
    nl = nonlinear_term(th)
    ip = inner_coeffs(g, nl.coeffs, th.coeffs)
    assert abs(ip) <= 1e-10 * nl.l2_norm() * th.l2_norm()


def test_lp_norm_examples():
    g = Grid(16)
    assert lp_norm(to_physical(cos_mode(g)), np.inf) == pytest.approx(1.0, abs=1e-15)
    assert lp_norm(PhysicalField(g, np.zeros((16, 16))), 3) == 0
    f = random_field(g, 1, 5, 1.0, seed=0)
    assert lp_norm(to_physical(f), 2) == pytest.approx(f.l2_norm(), rel=1e-10)


def test_lp_norm_scale_robust():
    g = Grid(16)
    f = to_physical(random_field(g, 1, 5, 1.0, seed=0))
    for s in (1e-200, 1e200):
        scaled = PhysicalField(g, f.values * s)
        assert lp_norm(scaled, 7) == pytest.approx(s * lp_norm(f, 7), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), rms=st.floats(1e-3, 1e3), L=st.floats(0.5, 4))
def test_random_field_properties(seed, rms, L):
    g = Grid(32, L)
    f = random_field(g, 1, 8, rms, seed)
    v = to_physical(f).values
    assert np.sqrt(np.mean(v**2)) == pytest.approx(rms, rel=1e-10)
    assert abs(v.mean()) < 1e-12 * rms
    assert not np.any(f.coeffs[~g.dealias_mask])
