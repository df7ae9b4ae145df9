"""
Level-set truncations, the truncated energy inequality and the De Giorgi ladder.

For a level ``lam >= 0`` the truncations are ``(theta - lam)_+`` and ``(theta + lam)_-``
(the latter taken as the nonnegative part ``max(-theta - lam, 0)``). Along a recorded
trajectory the ladder uses levels ``lam_k = M (1 - 2^-k)`` and start times
``T_k = t0 (1 - 2^-k)`` with energies

    U_k = sup_{t >= T_k} ||theta_k(t)||_2^2 + 2 nu int_{T_k}^{t_end} ||Lambda^{alpha/2} theta_k||_2^2 dt.

The upper time limit is the end of the run, which can only lower U_k.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.integrate import trapezoid

from .solver import Trajectory
from .spectral import Grid, PhysicalField, fft_workers, inverse, l2_norm_coeffs, lp_norm_array

SIGNS = ("plus", "minus")


def _trunc(values: np.ndarray, lam: float, sign: str) -> np.ndarray:
    if sign == "plus":
        return np.maximum(values - lam, 0.0)
    if sign == "minus":
        return np.maximum(-values - lam, 0.0)
    raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")


def truncate(theta: PhysicalField, lam: float, sign: str = "plus") -> PhysicalField:
    """(theta - lam)_+ for ``plus``; (theta + lam)_- = -min(theta + lam, 0) for ``minus``."""
    if not lam >= 0:
        raise ValueError(f"level must be >= 0, got {lam}")
    return PhysicalField(theta.grid, _trunc(theta.values, lam, sign))


def _raw_coeffs(grid: Grid, values: np.ndarray) -> np.ndarray:
    # unlike spectral.forward the mean is kept: truncations are not zero-mean
    return sfft.rfft2(values, workers=fft_workers()) / grid.N**2


def truncated_terms(grid: Grid, values: np.ndarray, lam: float, sign: str, alpha: float, f_values=None):
    """(||tr||_2^2, ||Lambda^{alpha/2} tr||_2^2, work) for the truncation ``tr``.

    ``work`` is int f tr for ``plus`` and -int f tr for ``minus``: the lower truncation
    is the upper one of -theta, which is driven by -f. The fractional energy comes from
    the grid transform of the truncated samples; the truncation is not band-limited, so
    this carries a quadrature error at the kinks.
    """
    tr = _trunc(values, lam, sign)
    if not np.any(tr):
        return 0.0, 0.0, 0.0
    area = grid.cell_area
    e = area * float(np.sum(tr * tr))
    c = _raw_coeffs(grid, tr)
    d = l2_norm_coeffs(grid, c * grid.symbol(alpha / 2)) ** 2
    w = 0.0 if f_values is None else area * float(np.sum(f_values * tr))
    if sign == "minus":
        w = -w
    return e, d, w


def _snapshot_values(traj: Trajectory, idx) -> list[np.ndarray]:
    return [inverse(traj.grid, traj.snapshots[i].coeffs) for i in idx]


@dataclass
class LevelResidual:
    residual: float
    relative: float
    scale: float
    n_snapshots: int


def _window(traj: Trajectory, t1: float, t2: float) -> np.ndarray:
    times = np.asarray(traj.times)
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    tol = 1e-9 * max(1.0, abs(t2))
    idx = np.nonzero((times >= t1 - tol) & (times <= t2 + tol))[0]
    if idx.size < 2 or abs(times[idx[0]] - t1) > tol or abs(times[idx[-1]] - t2) > tol:
        raise ValueError(f"insufficient snapshots: [{t1}, {t2}] must start and end on recorded times")
    return idx


def level_energy_inequality_residual(
    traj: Trajectory,
    lam: float,
    t1: float,
    t2: float,
    sign: str = "plus",
    nu: float | None = None,
    f=None,
) -> LevelResidual:
    """RHS - LHS of the truncated energy inequality on the window [t1, t2].

    Time integrals use the trapezoid rule on recorded snapshots. The relative residual is
    scaled by (1/2)||tr(t1)||^2 + nu int ||Lambda^{alpha/2} tr||^2 + |int int f tr|.
    """
    if not lam >= 0:
        raise ValueError(f"level must be >= 0, got {lam}")
    nu = traj.nu if nu is None else nu
    f = traj.forcing if f is None else f
    g = traj.grid
    fv = inverse(g, f.coeffs)
    idx = _window(traj, t1, t2)
    t = np.asarray(traj.times)[idx]
    terms = np.array(
        [truncated_terms(g, v, lam, sign, traj.alpha, fv) for v in _snapshot_values(traj, idx)]
    )
    e, d, w = terms[:, 0], terms[:, 1], terms[:, 2]
    diss = nu * float(trapezoid(d, t))
    work = float(trapezoid(w, t))
    lhs = 0.5 * e[-1] + diss
    rhs = 0.5 * e[0] + work
    scale = 0.5 * e[0] + diss + abs(work)
    res = rhs - lhs
    rel = 0.0 if scale == 0 else res / scale
    return LevelResidual(res, rel, scale, int(idx.size))


@dataclass(frozen=True)
class DeGiorgiParams:
    alpha: float
    p: float
    p_prime: float
    delta: float
    m: float
    eta0: float
    M: float
    C: float
    U0: float
    nu: float
    t0: float
    f_norm: float


def degiorgi_params(
    alpha: float,
    p: float,
    U0: float,
    nu: float,
    t0: float,
    f_norm: float = 0.0,
    C: float = 1.0,
) -> DeGiorgiParams:
    """delta, m, eta0 and the level M that makes the ladder contract, with constant C."""
    if not p > 2.0 / alpha:
        raise ValueError(f"need p > 2/alpha = {2.0 / alpha:g} so that delta > 0, got p={p}")
    if not (U0 >= 0 and nu > 0 and t0 > 0 and C > 0 and f_norm >= 0):
        raise ValueError("need U0 >= 0, f_norm >= 0 and nu, t0, C > 0")
    pp = 1.0 if math.isinf(p) else p / (p - 1.0)
    delta = (2.0 - 2.0 * pp + pp * alpha) / (2.0 * pp)
    m = max(4.0, (2.0 + pp * (alpha - 1.0)) / (pp * delta))
    if U0 == 0:
        return DeGiorgiParams(alpha, p, pp, delta, m, math.inf, 0.0, C, U0, nu, t0, f_norm)
    eta0 = 1.0 / (2.0 * U0)
    e = 2.0 + pp * (alpha - 1.0)
    M1 = (4 * C) ** (1 / alpha) * 2 ** (m * (1 / alpha + 0.5)) * (2 * U0) ** 0.5 / (nu * t0) ** (1 / alpha)
    M2 = (2 * C * 2 ** (m * (1 + delta)) * f_norm / nu) ** (pp / e) * (2 * U0) ** (pp * delta / e)
    return DeGiorgiParams(alpha, p, pp, delta, m, eta0, M1 + M2, C, U0, nu, t0, f_norm)


class _LevelData:
    """Per-snapshot physical values, reused across levels."""

    def __init__(self, traj: Trajectory, sign: str):
        if not traj.snapshots:
            raise ValueError("trajectory has no snapshots")
        self.traj = traj
        self.sign = sign
        self.t = np.asarray(traj.times, dtype=float)
        self.values = _snapshot_values(traj, range(len(traj.times)))
        self._rows: dict[float, np.ndarray] = {}

    def rows(self, lam: float) -> np.ndarray:
        """Per snapshot: ||tr||^2, ||Lambda^{alpha/2} tr||^2, int |tr|^{2+alpha}."""
        key = float(lam)
        out = self._rows.get(key)
        if out is None:
            g, a = self.traj.grid, self.traj.alpha
            out = np.zeros((self.t.size, 3))
            for i, v in enumerate(self.values):
                e, d, _ = truncated_terms(g, v, lam, self.sign, a)
                if e > 0:
                    tr = _trunc(v, lam, self.sign)
                    out[i] = e, d, g.cell_area * float(np.sum(tr ** (2.0 + a)))
            self._rows[key] = out
        return out

    def energy(self, lam: float, start: float) -> tuple[float, float]:
        """(U, int int |tr|^{2+alpha}) for level ``lam`` on [start, t_end]; the terms
        are linearly interpolated at ``start`` when it falls between snapshots."""
        t = self.t
        j = int(np.searchsorted(t, start, side="left"))
        if j >= t.size:
            raise ValueError(f"start time {start} lies beyond the trajectory end {t[-1]}")
        rows = self.rows(lam)
        tt, rr = t[j:], rows[j:]
        if j > 0 and t[j] != start:
            w = (start - t[j - 1]) / (t[j] - t[j - 1])
            tt = np.concatenate([[start], tt])
            rr = np.vstack([(1 - w) * rows[j - 1] + w * rows[j], rr])
        if tt.size == 1:
            return float(rr[0, 0]), 0.0
        nu = self.traj.nu
        return float(np.max(rr[:, 0])) + 2 * nu * trapezoid(rr[:, 1], tt), trapezoid(rr[:, 2], tt)


def level_energies(
    traj: Trajectory, M: float, t0: float, K: int, sign: str = "plus", _data=None
) -> np.ndarray:
    """U_0..U_K for levels M(1 - 2^-k) and start times t0(1 - 2^-k)."""
    if traj.times[-1] < t0:
        raise ValueError(f"trajectory ends at {traj.times[-1]} before t0={t0}")
    data = _data or _LevelData(traj, sign)
    out = np.zeros(K + 1)
    for k in range(K + 1):
        lam = M * (1 - 2.0**-k)
        out[k] = data.energy(lam, t0 * (1 - 2.0**-k))[0]
    return out


def fit_iteration_constant(
    traj: Trajectory, t0: float, sign: str = "plus", n_levels: int = 16, n_starts: int = 6, _data=None
) -> float:
    """Smallest C with nu ||tr||^{2+alpha}_{L^{2+alpha}(T^2 x [T, t_end])} <= C U^{(2+alpha)/2}
    over a grid of levels below the field's maximum and start times in [0, t0)."""
    data = _data or _LevelData(traj, sign)
    a, nu = traj.alpha, traj.nu
    top = max(float(np.max(_trunc(v, 0.0, sign))) for v in data.values)
    best = 0.0
    for s in np.linspace(0.0, 0.9, n_levels):
        for k in range(n_starts):
            U, q = data.energy(s * top, t0 * (1 - 2.0**-k))
            if U > 0 and q > 0:
                best = max(best, nu * q / U ** ((2 + a) / 2))
    return best


@dataclass
class DeGiorgiLadder:
    params: DeGiorgiParams
    sign: str
    K: int
    lam: np.ndarray
    T: np.ndarray
    U: np.ndarray
    t_end: float
    sup_at_t0: float

    @property
    def V(self) -> np.ndarray:
        if self.params.U0 == 0:
            return np.zeros_like(self.U)
        return 2.0 ** (self.params.m * np.arange(self.K + 1)) * self.params.eta0 * self.U


def build_ladder(
    traj: Trajectory, t0: float, K: int = 15, p: float = math.inf, sign: str = "plus", C: float | None = None
) -> DeGiorgiLadder:
    """Fit C (unless given), set M from the ladder parameters and measure U_0..U_K."""
    if traj.times[-1] < t0:
        raise ValueError(f"trajectory ends at {traj.times[-1]} before t0={t0}")
    data = _LevelData(traj, sign)
    g = traj.grid
    f_norm = lp_norm_array(inverse(g, traj.forcing.coeffs), g.cell_area, p)
    U0 = data.energy(0.0, 0.0)[0]
    if C is None:
        C = fit_iteration_constant(traj, t0, sign, _data=data) or 1.0
    prm = degiorgi_params(traj.alpha, p, U0, traj.nu, t0, f_norm, C)
    U = level_energies(traj, prm.M, t0, K, sign, _data=data)
    k = np.arange(K + 1)
    i0 = traj.index_at(t0)
    sup0 = float(np.max(_trunc(data.values[i0], 0.0, sign)))
    return DeGiorgiLadder(prm, sign, K, prm.M * (1 - 2.0**-k), t0 * (1 - 2.0**-k), U, float(traj.times[-1]), sup0)


@dataclass
class IterationRow:
    k: int
    lam: float
    T: float
    U: float
    V: float
    rhs_U: float
    margin_U: float
    holds_U: bool
    rhs_V: float
    margin_V: float
    holds_V: bool


@dataclass
class IterationReport:
    sign: str
    M: float
    C: float
    delta: float
    m: float
    rows: list = field(default_factory=list)
    U_ratio: float = 0.0
    sup_at_t0: float = 0.0
    sup_ok: bool = True

    @property
    def all_hold(self) -> bool:
        return all(r.holds_V for r in self.rows) and bool(self.sup_ok)

    def to_json(self) -> str:
        d = asdict(self)
        d["all_hold"] = self.all_hold
        return json.dumps(d, sort_keys=True, default=lambda x: x.item() if isinstance(x, np.generic) else float(x))


def verify_iteration(ladder: DeGiorgiLadder, rtol: float = 1e-12) -> IterationReport:
    """Check the energy recursion and V_k <= V_{k-1}^{1+delta} level by level."""
    prm = ladder.params
    a, pp, d, M, C = prm.alpha, prm.p_prime, prm.delta, prm.M, prm.C
    U, V = ladder.U, ladder.V
    rep = IterationReport(ladder.sign, float(M), float(C), d, prm.m, sup_at_t0=ladder.sup_at_t0)
    rep.sup_ok = bool(ladder.sup_at_t0 <= M)
    rep.U_ratio = float(U[-1] / U[0]) if U[0] > 0 else 0.0
    for k in range(1, ladder.K + 1):
        if M > 0:
            r1 = C * 2 ** (2 * k * a + 1) / (prm.nu * prm.t0 * M**a) * U[k - 1] ** ((2 + a) / 2)
            e = 2 / pp + a - 1
            r2 = C * prm.f_norm * 2 ** (k * e) / (prm.nu * M**e) * U[k - 1] ** (1 + d)
            rhs_U = r1 + r2
        else:
            rhs_U = 0.0
        rhs_V = V[k - 1] ** (1 + d)
        rep.rows.append(
            IterationRow(
                k, float(ladder.lam[k]), float(ladder.T[k]), float(U[k]), float(V[k]),
                float(rhs_U), float(rhs_U - U[k]), bool(U[k] <= rhs_U * (1 + rtol)),
                float(rhs_V), float(rhs_V - V[k]), bool(V[k] <= rhs_V * (1 + rtol)),
            )
        )
    return rep


def linfty_bound(theta0_l2: float, f_norm: float, p: float, nu: float, alpha: float, t: float) -> float:
    """||theta_0||_2 / (nu t)^{1/alpha} + (||f||_p / nu)^{a1} ||theta_0||_2^{a2}
    with a1 = p/(p + p alpha - 2), a2 = (p alpha - 2)/(p + p alpha - 2); for p = inf
    a1 = 1/(1 + alpha), a2 = alpha/(1 + alpha). Proportionality constant 1."""
    if not p > 2.0 / alpha:
        raise ValueError(f"need p > 2/alpha = {2.0 / alpha:g}, got {p}")
    if not t > 0:
        raise ValueError("t must be positive")
    first = theta0_l2 / (nu * t) ** (1.0 / alpha)
    if f_norm == 0 or theta0_l2 == 0:
        return first
    if math.isinf(p):
        a1, a2 = 1.0 / (1.0 + alpha), alpha / (1.0 + alpha)
    else:
        den = p + p * alpha - 2.0
        a1, a2 = p / den, (p * alpha - 2.0) / den
    return first + (f_norm / nu) ** a1 * theta0_l2**a2
