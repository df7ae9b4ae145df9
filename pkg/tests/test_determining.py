import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqgdet.determining import (
    DeterminingParams,
    absorbing_radii,
    apriori_bound_critical,
    apriori_bound_subcritical,
    brute_force_wavenumber,
    c_alpha_r,
    determining_wavenumber,
    holder_proxy_norm,
    index_range,
    little_l,
    log_N,
    select_r,
    subcritical_wavenumber,
    sup_bound,
    wavenumber_trace,
)
from sqgdet.littlewood_paley import shell_system
from sqgdet.spectral import Grid, SpectralField, inverse, random_field


def one_minus_pow2(x):
    return -math.expm1(x * math.log(2.0))


@pytest.mark.parametrize("alpha,expected", [(1.0, (3, math.inf)), (1.5, (6, 8)), (0.5, (7, math.inf))])
def test_index_range(alpha, expected):
    lo, hi = index_range(alpha)
    assert lo == pytest.approx(expected[0]) and hi == expected[1]


def test_little_l():
    assert little_l(1.0, 7) == 4
    assert little_l(1.5, 7) == 6
    assert little_l(1.0, 3 + 1e-9) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        little_l(1.0, 2)


def test_c_alpha_r_values():
    # independent evaluation through expm1
    ref1 = one_minus_pow2(2 / 8 - 2 / 7) ** 4 / 64
    assert c_alpha_r(1.0, 7) == pytest.approx(ref1, rel=1e-10)
    assert c_alpha_r(1.0, 7) == pytest.approx(5.585e-9, rel=1e-3)
    ref2 = 0.25 * one_minus_pow2(0.25 - 2 / 7) ** 6
    assert c_alpha_r(1.5, 7) == pytest.approx(ref2, rel=1e-10)
    assert c_alpha_r(1.5, 7) == pytest.approx(5.34e-11, rel=1e-3)
    assert c_alpha_r(1.2, 16, c0=3.0) == pytest.approx(3 * c_alpha_r(1.2, 16), rel=1e-15)


def test_c_alpha_r_vanishes_at_r0():
    """The constant degenerates as r -> r0 = 4/(alpha-1); the a-priori bound's
    c0 (alpha-1)^2 does not."""
    a = 1.5
    vals = [c_alpha_r(a, 8 - d) / (a - 1) ** 2 for d in (1e-1, 1e-2, 1e-3)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-20


def test_params_validation():
    with pytest.raises(ValueError):
        DeterminingParams(1.0, 2.5, 0.1)
    with pytest.raises(ValueError):
        DeterminingParams(1.0, 7, 0.0)
    p = DeterminingParams(1.2, 16, 0.1)
    assert p.threshold == pytest.approx(c_alpha_r(1.2, 16) * 0.1)


def test_zero_field():
    g = Grid(32)
    z = SpectralField.zeros(g)
    res = determining_wavenumber(z, DeterminingParams(1.0, 7, 0.1))
    assert res.Q == -1 and res.defined
    assert subcritical_wavenumber(z, 1.5, 0.1, r=7).Q == -1


def shell0_field(g, A):
    # modes with |k| in {1, sqrt 2} sit where phi_0 = 1 (and no other shell)
    return SpectralField.from_modes(g, [((1, 0), A, 0.0), ((1, 1), 0.3 * A, 0.5)])


@pytest.mark.parametrize("alpha,r", [(1.0, 7), (0.6, 10), (1.5, 7)])
@pytest.mark.parametrize("A", [1e-12, 1e-6, 1.0, 1e3])
def test_single_shell_against_brute_force(alpha, r, A):
    g = Grid(32)
    th = shell0_field(g, A)
    p = DeterminingParams(alpha, r, 0.1)
    res = determining_wavenumber(th, p)
    assert res.Q == brute_force_wavenumber(th, p)
    # closed form: shell 0 only, so condition 2 reads lambda^-alpha * ||theta_0||_inf < c nu
    sup0 = float(np.max(np.abs(inverse(g, th.coeffs))))
    fails1 = (1 - alpha + 2 / r) >= 0 and sup0 > 0
    if res.Q > 0 and not fails1:
        assert 2.0 ** (-alpha * res.Q) * sup0 < p.threshold <= 2.0 ** (-alpha * (res.Q - 1)) * sup0


def test_random_snapshots_match_brute_force():
    g = Grid(32)
    rng = np.random.default_rng(7)
    for i in range(25):
        alpha = float(rng.uniform(0.4, 1.9))
        lo, hi = index_range(alpha)
        r = float(rng.uniform(lo, min(hi, lo + 10)))
        try:
            p = DeterminingParams(alpha, r, float(10 ** rng.uniform(-3, 0)))
        except ValueError:
            continue
        th = random_field(g, 1, rng.uniform(2, 10), float(10 ** rng.uniform(-14, 0)), i)
        assert determining_wavenumber(th, p).Q == brute_force_wavenumber(th, p)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), log_amp=st.floats(-14, 0), s=st.floats(1, 1e4))
def test_monotone_in_amplitude(seed, log_amp, s):
    g = Grid(32)
    p = DeterminingParams(1.2, 16, 0.05)
    th = random_field(g, 1, 8, 10**log_amp, seed)
    assert determining_wavenumber(th * s, p).Q >= determining_wavenumber(th, p).Q


def test_q_limit_gives_undefined():
    g = Grid(32)
    th = random_field(g, 1, 8, 1.0, 0)
    p = DeterminingParams(1.0, 7, 0.01)
    full = determining_wavenumber(th, p)
    assert full.defined and full.Q > 5
    cut = determining_wavenumber(th, p, q_limit=full.Q - 1)
    assert not cut.defined and cut.lam == math.inf
    assert determining_wavenumber(th, p, q_limit=full.Q).Q == full.Q


def test_wavenumber_trace():
    g = Grid(16)
    snaps = [random_field(g, 1, 4, a, 0) for a in (1e-12, 1.0)]
    tr = wavenumber_trace([0.0, 1.0], snaps, DeterminingParams(1.0, 7, 0.1))
    assert tr.Q[0] <= tr.Q[1] and not tr.undefined.any()
    assert [r["t"] for r in tr.records()] == [0.0, 1.0]


def test_select_r_examples():
    a = 1.5
    lo, r0 = index_range(a)
    assert select_r(a, 0.0, 1.0) == pytest.approx((lo + r0) / 2)
    assert select_r(a, 1e-300, 1.0) == pytest.approx((lo + r0) / 2)
    r = select_r(a, 1.0, 1.0)
    assert lo < r < r0
    assert (2 / r - 2 / r0) * log_N(a, r, 1.0, 1.0, 1.0, 1.0) <= math.log(4 / 3) * (1 + 1e-12)
    # an observed wavenumber above N(r) accepts the first trial
    mid = (lo + r0) / 2
    big = math.exp(log_N(a, mid, 1.0, 1.0, 1.0, 1.0) + 1)
    assert select_r(a, 1.0, 1.0, lam_observed=big) == mid
    with pytest.raises(ValueError):
        select_r(1.0, 1.0, 1.0)


def test_selected_r_wavenumber_below_subcritical():
    g = Grid(32)
    a, nu = 1.5, 0.05
    for i in range(10):
        th = random_field(g, 1, 8, 10.0 ** (i - 5), i)
        r = select_r(a, sup_bound(th), nu)
        lam_r = determining_wavenumber(th, DeterminingParams(a, r, nu)).lam
        lam = subcritical_wavenumber(th, a, nu, r=r).lam
        assert lam_r <= lam


def test_absorbing_radii():
    g = Grid(16)
    assert absorbing_radii(SpectralField.zeros(g), 0.1, 1.0) == (0.0, 0.0)
    f = SpectralField.from_modes(g, [((1, 0), 2.0, 0.0)])
    nu = 0.3
    R2, Rinf = absorbing_radii(f, nu, 1.0)
    assert R2 == pytest.approx((2 * np.pi) ** -0.5 * f.l2_norm() / nu, rel=1e-12)
    # p -> inf limit of the finite-p exponents
    R_big = absorbing_radii(f, nu, 1.0, p=1e9).R_inf
    assert R_big == pytest.approx((2.0 / nu) ** 0.5 * R2**0.5, rel=1e-6)
    assert Rinf == pytest.approx((2.0 / nu) ** 0.5 * R2**0.5, rel=1e-12)
    with pytest.raises(ValueError):
        absorbing_radii(f, nu, 1.0, p=2)


def test_apriori_bound_subcritical():
    assert apriori_bound_subcritical(1.5, 1.0, 1.0) == pytest.approx(4096)
    assert apriori_bound_subcritical(1.5, 0.0, 1.0) == 0.0
    X = 2 * 100.0 / (0.25 * 0.01)
    assert apriori_bound_subcritical(1.5, 100.0, 0.01) == pytest.approx(X**4)


def test_apriori_bound_critical():
    b = apriori_bound_critical(0.0, 0.1, 2.0)
    assert b.h == pytest.approx(min(0.1 / 2.0, 0.25)) and math.isfinite(b.bound)
    b1 = apriori_bound_critical(1.0, 0.5, 1.0)
    b2 = apriori_bound_critical(2.0, 0.5, 1.0)
    b4 = apriori_bound_critical(4.0, 0.5, 1.0)
    # log bound grows faster than linearly in log ||f||: super-polynomial growth
    assert b4.log_bound - b2.log_bound > b2.log_bound - b1.log_bound > 0
    with pytest.raises(ValueError):
        apriori_bound_critical(1.0, 0.5, 1.0, r=3.5)


def test_holder_proxy():
    g = Grid(32)
    assert holder_proxy_norm(SpectralField.zeros(g), 0.3) == 0.0
    th = random_field(g, 8, 12, 1.0, 0)
    sup = float(np.max(np.abs(inverse(g, th.coeffs))))
    assert holder_proxy_norm(th, 0.25) == pytest.approx(8**0.25 * sup, rel=1e-12)
    th = random_field(g, 1, 14, 1.0, 1)
    sup = float(np.max(np.abs(inverse(g, th.coeffs))))
    assert holder_proxy_norm(th, 0.0) <= 2 * sup
    assert shell_system(g).q_max >= 3
