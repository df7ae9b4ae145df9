"""
Time integration of the forced dissipative SQG equation

    theta_t + u . grad(theta) + nu Lambda^alpha theta - eps Laplacian(theta) = f,
    u = R^perp theta,

with an integrating-factor RK4 scheme: the linear dissipation is applied exactly through
``exp(-(nu |xi|^alpha + eps |xi|^2) dt)`` (``xi = 2 pi k / L``) and the advection plus
forcing are advanced by classical RK4 in the transformed variable.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .spectral import (
    Grid,
    SpectralField,
    advection_coeffs,
    forward,
    inner_coeffs,
    inverse,
    l2_norm_coeffs,
    random_field,
)

log = logging.getLogger(__name__)

BLOWUP_LINF = 1e8


class BlowUpError(RuntimeError):
    """Raised when the solution becomes non-finite or exceeds the sup-norm ceiling."""

    def __init__(self, t: float, sup_norm: float):
        super().__init__(f"solution blew up at t={t:.6g} (sup norm {sup_norm:.3g})")
        self.t = t
        self.sup_norm = sup_norm


@dataclass(frozen=True)
class ForcingSpec:
    """Time-independent zero-mean forcing.

    Either explicit ``modes`` as ``((k1, k2), amplitude, phase)`` triples, each giving
    ``amplitude * cos(2 pi k.x / L + phase)``, or a random band
    ``band = {"k_min", "k_max", "rms", "seed"}``. Both may be combined.
    """

    modes: tuple = ()
    band: dict | None = None

    def field(self, grid: Grid) -> SpectralField:
        f = SpectralField.zeros(grid)
        if self.modes:
            f = f + SpectralField.from_modes(grid, self.modes)
        if self.band:
            b = self.band
            f = f + random_field(grid, b["k_min"], b["k_max"], b["rms"], int(b.get("seed", 0)))
        return SpectralField(grid, f.coeffs * grid.dealias_mask)

    def scaled(self, factor: float) -> "ForcingSpec":
        modes = tuple((k, a * factor, ph) for k, a, ph in self.modes)
        band = dict(self.band, rms=self.band["rms"] * factor) if self.band else None
        return ForcingSpec(modes, band)


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid
    alpha: float
    nu: float
    t_end: float
    dt: float | None = None
    eps: float = 0.0
    forcing: ForcingSpec = ForcingSpec()
    record_stride: int = 1
    seed: int = 0
    cfl: float = 0.5
    dt_max: float = 1e-2
    cfl_every: int = 10
    keep_snapshots: bool = True

    def __post_init__(self):
        errs = []
        if not 0 < self.alpha <= 2:
            errs.append(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.nu > 0:
            errs.append(f"nu must be positive, got {self.nu}")
        if not self.eps >= 0:
            errs.append(f"eps must be >= 0, got {self.eps}")
        if self.dt is not None and not self.dt > 0:
            errs.append(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            errs.append(f"t_end must be >= 0, got {self.t_end}")
        if self.record_stride < 1:
            errs.append("record_stride must be >= 1")
        if not 0 < self.cfl <= 1:
            errs.append(f"cfl must lie in (0, 1], got {self.cfl}")
        if errs:
            raise ValueError("; ".join(errs))

    def damping_rate(self) -> np.ndarray:
        g = self.grid
        return self.nu * g.symbol(self.alpha) + self.eps * g.freq**2


class Stepper:
    """Integrating-factor RK4 for one configuration; caches exponential factors per dt."""

    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.grid = cfg.grid
        self.rate = cfg.damping_rate()
        self.f = cfg.forcing.field(cfg.grid).coeffs
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def factors(self, dt: float):
        ef = self._cache.get(dt)
        if ef is None:
            ef = (np.exp(-self.rate * dt), np.exp(-self.rate * dt / 2))
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[dt] = ef
        return ef

    def rhs(self, c: np.ndarray) -> np.ndarray:
        return self.f - advection_coeffs(self.grid, c)

    def step(self, c: np.ndarray, dt: float) -> np.ndarray:
        e, eh = self.factors(dt)
        k1 = self.rhs(c)
        k2 = self.rhs(eh * (c + 0.5 * dt * k1))
        k3 = self.rhs(eh * c + 0.5 * dt * k2)
        k4 = self.rhs(e * c + dt * eh * k3)
        out = e * c + (dt / 6.0) * (e * k1 + 2.0 * eh * (k2 + k3) + k4)
        out[0, 0] = 0.0
        return out

    def max_speed(self, c: np.ndarray) -> float:
        s1, s2 = self.grid.riesz_symbols
        u1, u2 = inverse(self.grid, np.stack([s1 * c, s2 * c]))
        return float(np.sqrt(np.max(u1 * u1 + u2 * u2)))


def cfl_dt(cfg: SolverConfig, umax: float) -> float:
    """min(dt_max, cfl * dx / max|u|)."""
    return cfg.dt_max if umax == 0 else min(cfg.dt_max, cfg.cfl * cfg.grid.dx / umax)


def check_blowup(grid: Grid, c: np.ndarray, t: float) -> None:
    """Raise BlowUpError on non-finite coefficients or sup norm above BLOWUP_LINF."""
    # sum |c| bounds the sup norm; only transform when it is not conclusive
    bound = float(np.sum(np.abs(c))) * 2.0
    if not np.isfinite(bound):
        raise BlowUpError(t, float("inf"))
    if bound > BLOWUP_LINF:
        sup = float(np.max(np.abs(inverse(grid, c))))
        if not np.isfinite(sup) or sup > BLOWUP_LINF:
            raise BlowUpError(t, sup)


def step(theta: SpectralField, cfg: SolverConfig, dt: float | None = None) -> SpectralField:
    """Advance one integrating-factor RK4 step of size ``dt`` (default ``cfg.dt``)."""
    h = cfg.dt if dt is None else dt
    if h is None:
        raise ValueError("step() needs an explicit dt when cfg.dt is auto")
    out = Stepper(cfg).step(theta.coeffs, h)
    check_blowup(cfg.grid, out, h)
    return SpectralField(theta.grid, out)


@dataclass
class Trajectory:
    """Snapshots at ``record_stride`` plus per-step scalar diagnostics.

    ``series`` holds arrays keyed by ``t``, ``l2`` (||theta||_2), ``linf`` (grid max),
    ``hdiss`` (||Lambda^{alpha/2} theta||_2), ``grad`` (||grad theta||_2) and
    ``work`` (<f, theta>).
    """

    grid: Grid
    alpha: float
    nu: float
    eps: float
    forcing: SpectralField
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    series: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def snapshot(self, i: int) -> SpectralField:
        return self.snapshots[i]

    def index_at(self, t: float) -> int:
        """Index of the recorded snapshot closest to ``t``."""
        return int(np.argmin(np.abs(np.asarray(self.times) - t)))


Observer = Callable[[float, SpectralField], None]


def _diagnostics(stepper: Stepper, c: np.ndarray, alpha: float) -> tuple:
    g = stepper.grid
    vals = inverse(g, c)
    return (
        l2_norm_coeffs(g, c),
        float(np.max(np.abs(vals))),
        l2_norm_coeffs(g, c * g.symbol(alpha / 2)),
        l2_norm_coeffs(g, c * g.freq),
        inner_coeffs(g, stepper.f, c),
    )


def simulate(
    cfg: SolverConfig,
    theta0: SpectralField,
    observers: Sequence[Observer] = (),
) -> Trajectory:
    """Integrate from ``theta0`` to ``cfg.t_end``.

    With ``cfg.dt = None`` the step is ``min(dt_max, cfl * dx / max|u|)``, refreshed every
    ``cfg.cfl_every`` steps. The last step is shortened to land on ``t_end``.
    """
    if theta0.grid != cfg.grid:
        raise ValueError("initial condition lives on a different grid")
    stepper = Stepper(cfg)
    traj = Trajectory(cfg.grid, cfg.alpha, cfg.nu, cfg.eps, SpectralField(cfg.grid, stepper.f))
    keys = ("t", "l2", "linf", "hdiss", "grad", "work")
    rows = []

    c = np.array(theta0.coeffs)
    t = 0.0
    n = 0

    def record(t, c, force_snapshot=False):
        rows.append((t,) + _diagnostics(stepper, c, cfg.alpha))
        if n % cfg.record_stride == 0 or force_snapshot:
            snap = SpectralField(cfg.grid, c)
            if cfg.keep_snapshots:
                traj.times.append(t)
                traj.snapshots.append(snap)
            for obs in observers:
                obs(t, snap)

    record(t, c)
    if cfg.dt is not None:
        n_full = int(np.floor(cfg.t_end / cfg.dt + 1e-9))
        steps = [cfg.dt] * n_full
        rem = cfg.t_end - n_full * cfg.dt
        if rem > 1e-9 * cfg.dt:
            steps.append(rem)
    else:
        steps = None

    while (steps is not None and n < len(steps)) or (steps is None and t < cfg.t_end):
        if steps is not None:
            h = steps[n]
        else:
            if n % cfg.cfl_every == 0:
                dt = cfl_dt(cfg, stepper.max_speed(c))
            h = min(dt, cfg.t_end - t)
        c = stepper.step(c, h)
        n += 1
        if steps is not None:
            last = n == len(steps)
            t = cfg.t_end if last else n * cfg.dt
        else:
            t = t + h
            if cfg.t_end - t <= 1e-12 * cfg.t_end:
                t = cfg.t_end
            last = t >= cfg.t_end
        check_blowup(cfg.grid, c, t)
        record(t, c, force_snapshot=last)

    arr = np.array(rows, dtype=float).reshape(-1, len(keys))
    traj.series = {k: arr[:, i].copy() for i, k in enumerate(keys)}
    return traj


def l2_absorbing_radius(f: SpectralField, nu: float, alpha: float) -> float:
    """R_2 = ||Lambda^{-alpha/2} f||_2 / (nu lambda_0^{alpha/2}), lambda_0 = 1/L."""
    g = f.grid
    return l2_norm_coeffs(g, f.coeffs * g.symbol(-alpha / 2)) / (nu * (1.0 / g.L) ** (alpha / 2))


@dataclass
class EnvelopeReport:
    times: np.ndarray
    energy: np.ndarray
    envelope: np.ndarray
    ok: np.ndarray
    R2: float
    entry_time: float | None

    @property
    def holds(self) -> bool:
        return bool(np.all(self.ok))


def energy_envelope(traj: Trajectory, tol: float = 1e-8) -> EnvelopeReport:
    """Compare ||theta(t)||_2^2 with the Gronwall envelope

        ||theta_0||^2 e^{-a t} + ||Lambda^{-alpha/2} f||^2 / (nu^2 (2 pi/L)^alpha) (1 - e^{-a t}),

    ``a = nu (2 pi / L)^alpha``, at every step. ``ok`` allows a relative slack ``tol``.
    ``entry_time`` is the first time after which ||theta||_2 <= R_2 for the rest of the run.
    """
    s = traj.series
    if len(s.get("t", ())) == 0:
        raise ValueError("empty trajectory")
    g = traj.grid
    f = traj.forcing
    w0 = (2 * np.pi / g.L) ** traj.alpha
    a = traj.nu * w0
    F2 = l2_norm_coeffs(g, f.coeffs * g.symbol(-traj.alpha / 2)) ** 2
    t = s["t"]
    e = s["l2"] ** 2
    decay = np.exp(-a * t)
    env = e[0] * decay + F2 / (traj.nu**2 * w0) * (1 - decay)
    ok = e - env <= tol * np.maximum(env, np.finfo(float).tiny)
    R2 = l2_absorbing_radius(f, traj.nu, traj.alpha)
    inside = s["l2"] <= R2
    entry = None
    if inside[-1]:
        outside = np.nonzero(~inside)[0]
        entry = float(t[0]) if outside.size == 0 else float(t[outside[-1] + 1])
    return EnvelopeReport(t, e, env, ok, R2, entry)


@dataclass
class BudgetReport:
    residual: np.ndarray
    dissipation: np.ndarray
    relative: np.ndarray

    @property
    def max_relative(self) -> float:
        return float(np.max(np.abs(self.relative))) if self.relative.size else 0.0


def energy_budget_residual(traj: Trajectory) -> BudgetReport:
    """Per-interval residual of d/dt (1/2)||theta||^2 = -nu||Lambda^{alpha/2} theta||^2
    - eps||grad theta||^2 + <f, theta>, with trapezoid quadrature of the right side."""
    s = traj.series
    t = s["t"]
    if t.size < 2:
        return BudgetReport(np.zeros(0), np.zeros(0), np.zeros(0))
    E = 0.5 * s["l2"] ** 2
    diss = traj.nu * s["hdiss"] ** 2 + traj.eps * s["grad"] ** 2
    dt = np.diff(t)
    diss_int = 0.5 * dt * (diss[1:] + diss[:-1])
    work_int = 0.5 * dt * (s["work"][1:] + s["work"][:-1])
    res = np.diff(E) - (work_int - diss_int)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(diss_int > 0, res / diss_int, np.where(res == 0, 0.0, np.inf))
    return BudgetReport(res, diss_int, rel)


# --- checkpoints -----------------------------------------------------------------------

MAGIC = b"SQGD"
VERSION = 1
_HEADER = struct.Struct("<4sII4d")


def save_checkpoint(path, theta: SpectralField, alpha: float, nu: float, t: float) -> None:
    """Binary layout (little endian): magic "SQGD", u32 version, u32 N, f64 L, f64 alpha,
    f64 nu, f64 t, then N*(N/2+1) complex coefficients as (re, im) f64 pairs, row-major."""
    g = theta.grid
    header = _HEADER.pack(MAGIC, VERSION, g.N, g.L, alpha, nu, t)
    body = np.ascontiguousarray(theta.coeffs, dtype="<c16").tobytes()
    Path(path).write_bytes(header + body)


def load_checkpoint(path) -> tuple[SpectralField, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("checkpoint truncated")
    magic, version, N, L, alpha, nu, t = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    grid = Grid(int(N), float(L))
    n = N * (N // 2 + 1)
    body = raw[_HEADER.size :]
    if len(body) != 16 * n:
        raise ValueError(f"checkpoint body has {len(body)} bytes, expected {16 * n}")
    coeffs = np.frombuffer(body, dtype="<c16").reshape(grid.spectral_shape)
    return SpectralField(grid, coeffs), {"alpha": alpha, "nu": nu, "t": t, "version": version}
