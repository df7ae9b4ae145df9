"""
Dyadic (Littlewood-Paley) shells on the integer Fourier lattice.

The mollifier ``chi`` is 1 on [0, 3/4], 0 on [1, inf) and C-infinity in between; the
shell symbol is ``phi(rho) = chi(rho/2) - chi(rho)``. Shell ``q >= 0`` multiplies the
coefficient at ``k`` by ``phi(2^-q |k|)`` and shell ``-1`` by ``chi(|k|)``.

The mollifiers are evaluated at the *integer* lattice radius ``|k|``; the length scale
enters only through ``lambda_q = 2^q / L``. Shell ``q`` therefore holds modes with
``3 * 2^q / 4 < |k| < 2^(q+1)`` whatever the domain size. Shell ``-1`` contains only
``k = 0`` and is identically zero for zero-mean fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import Grid, PhysicalField, SpectralField, inverse, lp_norm_array


def _g(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def chi(rho):
    """Smooth radial cutoff: 1 for rho <= 3/4, 0 for rho >= 1."""
    rho = np.asarray(rho, dtype=float)
    s = np.clip(4.0 * (rho - 0.75), 0.0, 1.0)
    a, b = _g(1.0 - s), _g(s)
    return a / (a + b)


def phi(rho):
    rho = np.asarray(rho, dtype=float)
    return chi(rho / 2.0) - chi(rho)


def phi_q(rho, q: int):
    if q < -1:
        raise ValueError(f"shell index must be >= -1, got {q}")
    rho = np.asarray(rho, dtype=float)
    if q == -1:
        return chi(rho)
    return phi(rho / 2.0**q)


def lambda_q(q: int, L: float) -> float:
    """Dyadic wavenumber 2^q / L."""
    if not L > 0:
        raise ValueError("L must be positive")
    return 2.0**q / L


class ShellSystem:
    """Shell multipliers for one grid, from ``q = -1`` up to ``q_max``.

    ``q_max`` is the largest shell with nonzero multiplier somewhere on the stored
    lattice (``|k_i| <= N/2``). Shells above it are empty.
    """

    q_min = -1

    def __init__(self, grid: Grid):
        self.grid = grid
        kmag = grid.kmag
        mults = []
        q = -1
        while True:
            m = phi_q(kmag, q)
            if q >= 0 and not np.any(m > 0):
                break
            mults.append(m)
            q += 1
        self.q_max = q - 1
        self._mults = np.stack(mults)
        self._mults.setflags(write=False)
        self.support = self._mults > 0

    @property
    def qs(self) -> np.ndarray:
        return np.arange(-1, self.q_max + 1)

    def multiplier(self, q: int) -> np.ndarray:
        if q < -1:
            raise ValueError(f"shell index must be >= -1, got {q}")
        if q > self.q_max:
            return np.zeros(self.grid.spectral_shape)
        return self._mults[q + 1]

    @property
    def multipliers(self) -> np.ndarray:
        """Array of shape (q_max + 2, N, N//2 + 1), row i is shell i - 1."""
        return self._mults

    def low_pass_multiplier(self, Q: int) -> np.ndarray:
        """Literal finite sum of shell multipliers for q = -1..Q."""
        out = np.zeros(self.grid.spectral_shape)
        for q in range(-1, min(Q, self.q_max) + 1):
            out = out + self._mults[q + 1]
        return out

    def lambdas(self) -> np.ndarray:
        return 2.0 ** self.qs.astype(float) / self.grid.L


@lru_cache(maxsize=16)
def shell_system(grid: Grid) -> ShellSystem:
    return ShellSystem(grid)


def shell_project(theta: SpectralField, q: int) -> SpectralField:
    return SpectralField(theta.grid, theta.coeffs * shell_system(theta.grid).multiplier(q))


def low_pass(theta: SpectralField, Q: int) -> SpectralField:
    """theta_{<=Q} = sum_{q=-1}^{Q} Delta_q theta (zero for Q < -1)."""
    if Q < -1:
        return SpectralField.zeros(theta.grid)
    return SpectralField(theta.grid, theta.coeffs * shell_system(theta.grid).low_pass_multiplier(Q))


@dataclass(frozen=True)
class ShellSet:
    """Shells Delta_q theta for q = -1..q_max of one source field."""

    grid: Grid
    shells: tuple

    def reconstruct(self) -> SpectralField:
        c = np.zeros(self.grid.spectral_shape, dtype=np.complex128)
        for s in self.shells:
            c = c + s.coeffs
        return SpectralField(self.grid, c)

    def __getitem__(self, q: int) -> SpectralField:
        return self.shells[q + 1]

    def __len__(self):
        return len(self.shells)


def decompose(theta: SpectralField) -> ShellSet:
    ss = shell_system(theta.grid)
    return ShellSet(theta.grid, tuple(shell_project(theta, int(q)) for q in ss.qs))


def shell_fields(theta: SpectralField) -> np.ndarray:
    """Physical-space shells, shape (q_max + 2, N, N); row i is shell i - 1."""
    ss = shell_system(theta.grid)
    return inverse(theta.grid, ss.multipliers * theta.coeffs[None])


def shell_norms(theta: SpectralField, p: float, fields: np.ndarray | None = None) -> np.ndarray:
    """||Delta_q theta||_p for every q = -1..q_max."""
    if fields is None:
        fields = shell_fields(theta)
    area = theta.grid.cell_area
    return np.array([lp_norm_array(f, area, p) for f in fields])


def shell_lp_norm(theta: SpectralField, q: int, p: float) -> float:
    if q > shell_system(theta.grid).q_max:
        return 0.0
    vals = inverse(theta.grid, shell_project(theta, q).coeffs)
    return lp_norm_array(vals, theta.grid.cell_area, p)


def besov_norm(theta: SpectralField, l: float, fields: np.ndarray | None = None) -> float:
    """B^0_{l,l} norm: (sum_q ||Delta_q theta||_l^l)^(1/l)."""
    if not l >= 1:
        raise ValueError(f"l must be >= 1, got {l}")
    norms = shell_norms(theta, l, fields)
    m = float(np.max(norms)) if norms.size else 0.0
    if m == 0.0:
        return 0.0
    return m * float(np.sum((norms / m) ** l)) ** (1.0 / l)


def log_besov_norm(theta: SpectralField, l: float) -> float:
    """log of the B^0_{l,l} norm (-inf for the zero field)."""
    b = besov_norm(theta, l)
    return float(np.log(b)) if b > 0 else -np.inf


def bernstein_ratio(theta_q: SpectralField, q: int, r: float, s: float) -> float:
    """||u_q||_r / (lambda_q^{2(1/s - 1/r)} ||u_q||_s) for a field already in shell q."""
    area = theta_q.grid.cell_area
    vals = inverse(theta_q.grid, theta_q.coeffs)
    num = lp_norm_array(vals, area, r)
    den = lp_norm_array(vals, area, s)
    inv_r = 0.0 if np.isinf(r) else 1.0 / r
    inv_s = 0.0 if np.isinf(s) else 1.0 / s
    return num / (lambda_q(q, theta_q.grid.L) ** (2.0 * (inv_s - inv_r)) * den)


def positivity_ratio(theta_q: SpectralField, q: int, alpha: float, l: float) -> float:
    """l <Lambda^alpha u_q, u_q |u_q|^{l-2}> / (lambda_q^alpha ||u_q||_l^l)."""
    g = theta_q.grid
    u = inverse(g, theta_q.coeffs)
    lu = inverse(g, theta_q.coeffs * g.symbol(alpha))
    m = float(np.max(np.abs(u)))
    if m == 0:
        return np.nan
    un = u / m
    num = l * g.cell_area * float(np.sum((lu / m) * un * np.abs(un) ** (l - 2)))
    den = lambda_q(q, g.L) ** alpha * g.cell_area * float(np.sum(np.abs(un) ** l))
    return num / den


def physical(theta: SpectralField) -> PhysicalField:
    return PhysicalField(theta.grid, inverse(theta.grid, theta.coeffs))
