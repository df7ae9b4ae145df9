import math

import numpy as np
import pytest

from sqgdet.degiorgi import (
    build_ladder,
    degiorgi_params,
    level_energies,
    level_energy_inequality_residual,
    linfty_bound,
    truncate,
    verify_iteration,
)
from sqgdet.solver import ForcingSpec, SolverConfig, simulate
from sqgdet.spectral import Grid, PhysicalField, SpectralField, random_field, to_physical


def field_of(values):
    values = np.asarray(values, dtype=float)
    return PhysicalField(Grid(values.shape[0]), values)


def test_truncate_examples():
    th = field_of(np.tile([3.0, -2.0, 0.5, -0.5], (8, 2)))
    np.testing.assert_array_equal(truncate(th, 1.0).values[0, :4], [2.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(truncate(th, 1.0, "minus").values[0, :4], [0.0, 1.0, 0.0, 0.0])
    np.testing.assert_array_equal(truncate(th, 0.0).values[0, :4], [3.0, 0.0, 0.5, 0.0])
    with pytest.raises(ValueError):
        truncate(th, -1.0)
    with pytest.raises(ValueError):
        truncate(th, 1.0, "both")


def test_truncation_identity():
    th = to_physical(random_field(Grid(32), 1, 8, 1.0, 0))
    for lam in (0.0, 0.3, 1.1):
        rebuilt = truncate(th, lam).values - truncate(th, lam, "minus").values + np.clip(th.values, -lam, lam)
        np.testing.assert_allclose(rebuilt, th.values, atol=1e-14)
    big = float(np.max(np.abs(th.values)))
    assert not np.any(truncate(th, big).values) and not np.any(truncate(th, big, "minus").values)


@pytest.fixture(scope="module")
def unforced_run():
    g = Grid(32)
    return simulate(SolverConfig(g, 1.0, 0.05, 0.5, dt=2e-3), random_field(g, 1, 6, 1.0, 4))


@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_level_inequality_unforced(unforced_run, sign):
    for lam in (0.0, 0.3):
        res = level_energy_inequality_residual(unforced_run, lam, 0.0, 0.5, sign)
        assert res.residual >= -1e-6 * res.scale
    with pytest.raises(ValueError, match="insufficient"):
        level_energy_inequality_residual(unforced_run, 0.0, 0.0, 0.7)


def test_delta_examples():
    assert degiorgi_params(1.0, math.inf, 1.0, 0.1, 1.0).delta == pytest.approx(0.5)
    assert degiorgi_params(1.0, 4.0, 1.0, 0.1, 1.0).delta == pytest.approx(0.25)
    with pytest.raises(ValueError, match="2/alpha"):
        degiorgi_params(1.0, 2.0, 1.0, 0.1, 1.0)
    assert degiorgi_params(0.8, 5.0, 1.0, 0.1, 1.0).m >= 4


def test_level_vanishes_with_initial_energy():
    Ms = [degiorgi_params(1.0, math.inf, U0, 0.1, 1.0, f_norm=2.0).M for U0 in (1.0, 1e-4, 1e-8)]
    assert Ms[0] > Ms[1] > Ms[2] > 0 and Ms[2] < 1e-2 * Ms[0]
    assert degiorgi_params(1.0, math.inf, 0.0, 0.1, 1.0).M == 0.0


def test_levels_above_the_maximum_carry_no_energy(unforced_run):
    sup = max(float(np.max(np.abs(to_physical(s).values))) for s in unforced_run.snapshots)
    U = level_energies(unforced_run, 2 * sup, 0.25, 8)
    assert U[0] > 0 and np.all(U[1:] == 0)


def test_level_energies_nonincreasing(unforced_run):
    for sign in ("plus", "minus"):
        U = level_energies(unforced_run, 0.5, 0.25, 10, sign)
        assert np.all(np.diff(U) <= 1e-15 * U[0])


def test_zero_trajectory_holds_trivially():
    g = Grid(16)
    traj = simulate(SolverConfig(g, 1.0, 0.1, 0.2, dt=0.01), SpectralField.zeros(g))
    lad = build_ladder(traj, 0.1, K=5)
    assert lad.params.M == 0 and not np.any(lad.U) and not np.any(lad.V)
    assert verify_iteration(lad).all_hold


def test_ladder_on_forced_run():
    g = Grid(32)
    f = ForcingSpec((((1, 0), 1.0, 0.0),))
    traj = simulate(SolverConfig(g, 1.0, 0.05, 1.0, dt=5e-3, forcing=f), random_field(g, 1, 6, 1.0, 2))
    lad = build_ladder(traj, 0.5, K=8)
    rep = verify_iteration(lad)
    assert lad.params.M > lad.sup_at_t0 and rep.sup_ok
    assert rep.all_hold and rep.U_ratio == 0.0
    assert '"all_hold": true' in rep.to_json()


def test_linfty_bound_examples():
    assert linfty_bound(1.0, 0.0, math.inf, 1.0, 1.0, 1.0) == pytest.approx(1.0)
    assert linfty_bound(1.0, 4.0, math.inf, 1.0, 1.0, 1.0) == pytest.approx(3.0)
    assert linfty_bound(8.0, 1.0, 4.0, 1.0, 1.0, 1.0) == pytest.approx(10.0)
    assert linfty_bound(1.0, 0.0, math.inf, 0.5, 2.0, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        linfty_bound(1.0, 1.0, 2.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        linfty_bound(1.0, 1.0, math.inf, 1.0, 1.0, 0.0)
