"""
Slaved-pair synchronization: a master trajectory theta_1 and a slave theta_2 whose
modes below the determining wavenumber are overwritten by the master's after every step.
The difference w = theta_1 - theta_2 should then contract exponentially in B^0_{l,l}.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .determining import DeterminingParams, determining_wavenumber
from .littlewood_paley import besov_norm, shell_system
from .solver import SolverConfig, Stepper, cfl_dt, check_blowup
from .spectral import Grid, GridMismatchError, SpectralField, l2_norm_coeffs, random_field

log = logging.getLogger(__name__)

SLAVE_MODES = ("measured", "fixed", "none")


class UndefinedWavenumberError(RuntimeError):
    def __init__(self, t: float, which: str):
        super().__init__(f"determining wavenumber of {which} is undefined at t={t:.6g}")
        self.t = t
        self.which = which


@lru_cache(maxsize=64)
def _slave_mask(grid: Grid, Q: int) -> np.ndarray:
    ss = shell_system(grid)
    m = ss.low_pass_multiplier(Q) > 0 if Q >= -1 else np.zeros(grid.spectral_shape, bool)
    m.setflags(write=False)
    return m


def slave_low_modes(slave: SpectralField, master: SpectralField, Q: int) -> SpectralField:
    """Copy the master's coefficients onto the slave wherever the low-pass multiplier of
    ``Q`` is nonzero, so that ``low_pass(result, Q) == low_pass(master, Q)`` exactly."""
    if slave.grid != master.grid:
        raise GridMismatchError("slave and master live on different grids")
    m = _slave_mask(slave.grid, int(Q))
    return SpectralField(slave.grid, np.where(m, master.coeffs, slave.coeffs))


@dataclass(frozen=True)
class ICSpec:
    """Random band-limited initial condition, optionally added to the linear steady state
    f / (nu Lambda^alpha) of the forcing (``base="linear_steady"``)."""

    k_min: float = 1.0
    k_max: float = 8.0
    rms: float = 1.0
    slope: float = 0.0
    base: str = "zero"

    def build(self, cfg: SolverConfig, seed: int) -> SpectralField:
        g = cfg.grid
        th = random_field(g, self.k_min, self.k_max, self.rms, seed, self.slope)
        if self.base == "linear_steady":
            rate = cfg.damping_rate()
            f = cfg.forcing.field(g).coeffs
            steady = np.zeros_like(f)
            nz = rate > 0
            steady[nz] = f[nz] / rate[nz]
            th = th + SpectralField(g, steady)
        elif self.base != "zero":
            raise ValueError(f"unknown IC base {self.base!r}")
        return th


@dataclass(frozen=True)
class SyncConfig:
    solver: SolverConfig
    params: DeterminingParams
    slave_mode: str = "measured"
    fixed_Q: int | None = None
    recompute_stride: int = 1
    seeds: tuple = (1, 2)
    ic: ICSpec = ICSpec()

    def __post_init__(self):
        errs = []
        if self.slave_mode not in SLAVE_MODES:
            errs.append(f"slave_mode must be one of {SLAVE_MODES}, got {self.slave_mode!r}")
        if self.slave_mode == "fixed" and self.fixed_Q is None:
            errs.append("slave_mode 'fixed' needs fixed_Q")
        if self.recompute_stride < 1:
            errs.append("recompute_stride must be >= 1")
        if abs(self.params.alpha - self.solver.alpha) > 0 or self.params.nu != self.solver.nu:
            errs.append("solver and determining parameters disagree on alpha or nu")
        if abs(self.params.L - self.solver.grid.L) > 0:
            errs.append("solver grid and determining parameters disagree on L")
        if errs:
            raise ValueError("; ".join(errs))
        if self.recompute_stride > 1:
            log.warning("recomputing the determining wavenumber every %d steps only", self.recompute_stride)


@dataclass
class DecayFit:
    rate: float
    c_calibrated: float
    r2: float
    n_points: int
    window: tuple


@dataclass
class SyncTrace:
    """Per-step records of the slaved pair. ``besov`` is ||w||_{B^0_{l,l}}."""

    l: float
    alpha: float
    nu: float
    L: float
    t: list = field(default_factory=list)
    Q: list = field(default_factory=list)
    besov: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    low_residual: list = field(default_factory=list)
    fit: DecayFit | None = None

    def append(self, t, Q, besov, l2, low_residual):
        self.t.append(float(t))
        self.Q.append(None if Q is None else int(Q))
        self.besov.append(float(besov))
        self.l2.append(float(l2))
        self.low_residual.append(float(low_residual))

    def records(self) -> list[dict]:
        return [
            {"t": t, "Q": q, "besov": b, "l2": e}
            for t, q, b, e in zip(self.t, self.Q, self.besov, self.l2)
        ]

    def to_ndjson(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


def _pair_Q(th1: np.ndarray, th2: np.ndarray, grid: Grid, params: DeterminingParams, t: float):
    r1 = determining_wavenumber(SpectralField(grid, th1), params)
    if not r1.defined:
        raise UndefinedWavenumberError(t, "master")
    # the slave's wavenumber is taken on the field after slaving at the master's level
    th2s = np.where(_slave_mask(grid, r1.Q), th1, th2)
    r2 = determining_wavenumber(SpectralField(grid, th2s), params)
    if not r2.defined:
        raise UndefinedWavenumberError(t, "slave")
    return max(r1.Q, r2.Q)


def run_synced_pair(
    cfg: SyncConfig,
    theta1: SpectralField | None = None,
    theta2: SpectralField | None = None,
    fit_window: tuple | None = None,
) -> SyncTrace:
    """Advance master and slave in lock-step, slaving low modes after every step.

    Initial conditions default to ``cfg.ic`` built with ``cfg.seeds``. The slave is
    slaved at t = 0 as well, so the first record is the post-slaving difference.
    """
    sc = cfg.solver
    g = sc.grid
    p = cfg.params
    th1 = (theta1 if theta1 is not None else cfg.ic.build(sc, cfg.seeds[0])).coeffs.copy()
    th2 = (theta2 if theta2 is not None else cfg.ic.build(sc, cfg.seeds[1])).coeffs.copy()
    stepper = Stepper(sc)
    trace = SyncTrace(p.l, p.alpha, p.nu, p.L)

    def current_Q(n, t, prev):
        if cfg.slave_mode == "none":
            return None
        if cfg.slave_mode == "fixed":
            return cfg.fixed_Q
        if prev is None or n % cfg.recompute_stride == 0:
            return _pair_Q(th1, th2, g, p, t)
        return prev

    def record(t, Q):
        w = th1 - th2
        if Q is None:
            low = 0.0
        else:
            low = float(np.max(np.abs(w[_slave_mask(g, Q)]), initial=0.0))
        trace.append(t, Q, besov_norm(SpectralField(g, w), p.l), l2_norm_coeffs(g, w), low)

    t, n = 0.0, 0
    Q = current_Q(0, t, None)
    if Q is not None:
        th2 = np.where(_slave_mask(g, Q), th1, th2)
    record(t, Q)
    dt = sc.dt
    while t < sc.t_end * (1 - 1e-12):
        if sc.dt is None and n % sc.cfl_every == 0:
            dt = cfl_dt(sc, max(stepper.max_speed(th1), stepper.max_speed(th2)))
        h = min(dt, sc.t_end - t)
        th1 = stepper.step(th1, h)
        th2 = stepper.step(th2, h)
        n += 1
        t = sc.t_end if sc.t_end - (t + h) <= 1e-12 * sc.t_end else t + h
        check_blowup(g, th1, t)
        check_blowup(g, th2, t)
        Q = current_Q(n, t, Q)
        if Q is not None:
            th2 = np.where(_slave_mask(g, Q), th1, th2)
        record(t, Q)

    try:
        trace.fit = fit_decay_rate(trace, fit_window)
    except ValueError as e:
        log.info("no decay fit: %s", e)
    return trace


def fit_decay_rate(trace: SyncTrace, window: tuple | None = None, min_points: int = 10) -> DecayFit:
    """Least-squares slope of log ||w||_{B^0_{l,l}}^l against t.

    ``window = (t_a, t_b)`` defaults to everything after the first record. If the norm
    reaches 0 inside the window the fit uses the prefix before it.
    """
    t = np.asarray(trace.t, dtype=float)
    b = np.asarray(trace.besov, dtype=float)
    if window is None:
        window = (t[1] if t.size > 1 else -math.inf, math.inf)
    sel = (t >= window[0]) & (t <= window[1])
    t, b = t[sel], b[sel]
    zero = np.nonzero(~(b > 0))[0]
    if zero.size:
        t, b = t[: zero[0]], b[: zero[0]]
    if t.size < min_points:
        raise ValueError(f"need >= {min_points} positive points in the window, got {t.size}")
    y = trace.l * np.log(b)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    c = -slope * trace.L**trace.alpha / trace.nu
    return DecayFit(float(slope), float(c), r2, int(t.size), (float(t[0]), float(t[-1])))
