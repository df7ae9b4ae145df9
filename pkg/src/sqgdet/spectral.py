"""
Fourier representation of real, zero-mean scalars on the periodic square [0, L]^2.

Conventions (fixed throughout the package):

- A field is the Fourier series ``g(x) = sum_k ghat_k exp(i 2 pi k.x / L)`` over the
  integer lattice ``k in Z^2``. Symbols of differential operators are evaluated at the
  physical frequency ``2 pi |k| / L``.
- Coefficients are stored in the real-FFT half-spectrum layout of shape
  ``(N, N//2 + 1)``: axis 0 carries ``k1`` in FFT order, axis 1 carries ``k2 >= 0``.
  Physical arrays are ``values[i, j] = g(i L/N, j L/N)``, so ``x1`` runs along axis 0.
- ``coeffs = rfft2(values) / N**2``, i.e. stored numbers are the series coefficients
  ``ghat_k`` themselves. Parseval then reads
  ``(L/N)^2 sum |g_ij|^2 = L^2 sum_{k in Z^2} |ghat_k|^2``.
- The k = 0 coefficient is pinned to zero by every constructor and operator.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft


def fft_workers() -> int:
    """Thread count for FFTs, capped by ``SQGDET_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SQGDET_THREADS", "1")))
    except ValueError:
        return 1


class GridMismatchError(ValueError):
    pass


class HermitianError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """N x N collocation grid on [0, L]^2."""

    N: int
    L: float = 1.0

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 8 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 8, got {self.N!r}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L!r}")

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.N, self.N // 2 + 1)

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell_area(self) -> float:
        """Quadrature weight (L/N)^2 of the discrete L^p norms."""
        return self.dx**2

    @cached_property
    def k1(self) -> np.ndarray:
        return (np.fft.fftfreq(self.N) * self.N)[:, None] * np.ones((1, self.N // 2 + 1))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.ones((self.N, 1)) * np.arange(self.N // 2 + 1)[None, :]

    @cached_property
    def kmag(self) -> np.ndarray:
        """Integer-lattice radius |k| (dimensionless)."""
        return np.hypot(self.k1, self.k2)

    @cached_property
    def freq(self) -> np.ndarray:
        """Physical frequency 2 pi |k| / L."""
        return 2.0 * np.pi * self.kmag / self.L

    @cached_property
    def nyquist(self) -> np.ndarray:
        return (np.abs(self.k1) == self.N // 2) | (self.k2 == self.N // 2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        # 3|k_i| < N keeps products of retained modes alias-free for every even N
        return (3 * np.abs(self.k1) < self.N) & (3 * self.k2 < self.N)

    @cached_property
    def half_weights(self) -> np.ndarray:
        """Multiplicity of each stored coefficient in the full lattice sum."""
        w = np.full(self.spectral_shape, 2.0)
        w[:, 0] = 1.0
        w[:, -1] = 1.0
        return w

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.N) * self.dx
        return np.meshgrid(x, x, indexing="ij")

    def symbol(self, beta: float) -> np.ndarray:
        """(2 pi |k| / L)^beta with the k = 0 entry set to 0 (read-only, cached)."""
        return _symbol(self, float(beta))

    @cached_property
    def ik1(self) -> np.ndarray:
        return np.where(self.nyquist, 0.0, 2j * np.pi * self.k1 / self.L)

    @cached_property
    def ik2(self) -> np.ndarray:
        return np.where(self.nyquist, 0.0, 2j * np.pi * self.k2 / self.L)

    @cached_property
    def riesz_symbols(self) -> tuple[np.ndarray, np.ndarray]:
        """Symbols of R^perp = Lambda^{-1}(-d2, d1): i(-k2, k1)/|k|."""
        inv = np.zeros(self.spectral_shape)
        nz = self.kmag > 0
        inv[nz] = 1.0 / self.kmag[nz]
        s1 = np.where(self.nyquist, 0.0, -1j * self.k2 * inv)
        s2 = np.where(self.nyquist, 0.0, 1j * self.k1 * inv)
        return s1, s2


@lru_cache(maxsize=64)
def _symbol(grid: Grid, beta: float) -> np.ndarray:
    out = np.zeros(grid.spectral_shape)
    nz = grid.kmag > 0
    out[nz] = grid.freq[nz] ** beta
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Series coefficients of a real zero-mean field (half-spectrum layout)."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if c.shape != self.grid.spectral_shape:
            raise GridMismatchError(
                f"coefficient shape {c.shape} does not match grid {self.grid.spectral_shape}"
            )
        c[0, 0] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.spectral_shape, dtype=np.complex128))

    @classmethod
    def from_modes(cls, grid: Grid, modes) -> "SpectralField":
        """Sum of ``amp * cos(2 pi k.x / L + phase)`` over ``(k, amp, phase)`` triples."""
        c = np.zeros(grid.spectral_shape, dtype=np.complex128)
        for k, amp, phase in modes:
            k1, k2 = int(k[0]), int(k[1])
            if k1 == 0 and k2 == 0:
                raise ValueError("mode k = (0, 0) violates the zero-mean constraint")
            if max(abs(k1), abs(k2)) >= grid.N // 2:
                raise ValueError(f"mode {k} is at or beyond the Nyquist frequency")
            if k2 < 0 or (k2 == 0 and k1 < 0):
                k1, k2, phase = -k1, -k2, -phase
            val = 0.5 * amp * np.exp(1j * phase)
            c[k1 % grid.N, k2] += val
            if k2 == 0:
                c[(-k1) % grid.N, 0] += np.conj(val)
        return cls(grid, c)

    def _check(self, other: "SpectralField"):
        if self.grid != other.grid:
            raise GridMismatchError(f"grids differ: {self.grid} vs {other.grid}")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return SpectralField(self.grid, self.coeffs * float(s))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def l2_norm(self) -> float:
        """L^2 norm via Parseval."""
        return l2_norm_coeffs(self.grid, self.coeffs)


@dataclass(frozen=True, eq=False)
class PhysicalField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != (self.grid.N, self.grid.N):
            raise GridMismatchError(f"value shape {v.shape} does not match grid N={self.grid.N}")
        if not np.all(np.isfinite(v)):
            raise ValueError("physical field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def l2_norm_coeffs(grid: Grid, coeffs: np.ndarray) -> float:
    return float(grid.L * np.sqrt(np.sum(grid.half_weights * np.abs(coeffs) ** 2)))


def inner_coeffs(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """Real L^2 inner product of two real fields from their coefficients."""
    return float(grid.L**2 * np.sum(grid.half_weights * (a * np.conj(b)).real))


def forward(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Physical array(s) -> series coefficients (leading axes are batched)."""
    c = sfft.rfft2(values, workers=fft_workers()) / grid.N**2
    c[..., 0, 0] = 0.0
    return c


def inverse(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Series coefficients -> physical array(s) (leading axes are batched)."""
    return sfft.irfft2(coeffs * grid.N**2, s=(grid.N, grid.N), workers=fft_workers())


def hermitian_defect(grid: Grid, coeffs: np.ndarray) -> float:
    """Largest |c(-k) - conj c(k)| over the self-conjugate columns k2 = 0 and k2 = N/2."""
    worst = 0.0
    idx = (-np.arange(grid.N)) % grid.N
    for col in (0, grid.N // 2):
        c = coeffs[:, col]
        worst = max(worst, float(np.max(np.abs(c[idx] - np.conj(c)))))
    worst = max(worst, float(np.abs(coeffs[0, 0].imag)))
    return worst


def to_physical(f: SpectralField, tol: float = 1e-12) -> PhysicalField:
    scale = float(np.max(np.abs(f.coeffs))) if f.coeffs.size else 0.0
    if hermitian_defect(f.grid, f.coeffs) > tol * max(scale, np.finfo(float).tiny):
        raise HermitianError("coefficients are not Hermitian-symmetric")
    return PhysicalField(f.grid, inverse(f.grid, f.coeffs))


def to_spectral(g: PhysicalField) -> SpectralField:
    return SpectralField(g.grid, forward(g.grid, g.values))


def fractional_laplacian(theta: SpectralField, beta: float) -> SpectralField:
    """Lambda^beta with Lambda = sqrt(-Laplacian); the mean stays zero."""
    if beta == 0:
        return SpectralField(theta.grid, theta.coeffs)
    return SpectralField(theta.grid, theta.coeffs * theta.grid.symbol(beta))


def riesz_velocity(theta: SpectralField) -> tuple[SpectralField, SpectralField]:
    s1, s2 = theta.grid.riesz_symbols
    return SpectralField(theta.grid, s1 * theta.coeffs), SpectralField(theta.grid, s2 * theta.coeffs)


def advection_coeffs(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Dealiased coefficients of u.grad(theta) for raw coefficient arrays.

    Inputs are projected onto the dealiased set first; retained output modes are then
    free of aliasing errors.
    """
    c = coeffs * grid.dealias_mask
    s1, s2 = grid.riesz_symbols
    stack = np.stack([s1 * c, s2 * c, grid.ik1 * c, grid.ik2 * c])
    u1, u2, t1, t2 = inverse(grid, stack)
    out = forward(grid, u1 * t1 + u2 * t2)
    out *= grid.dealias_mask
    out[0, 0] = 0.0
    return out


def nonlinear_term(theta: SpectralField) -> SpectralField:
    """Convective term u.grad(theta), u = R^perp theta, with the 2/3 rule applied."""
    return SpectralField(theta.grid, advection_coeffs(theta.grid, theta.coeffs))


def dealias(theta: SpectralField) -> SpectralField:
    return SpectralField(theta.grid, theta.coeffs * theta.grid.dealias_mask)


def lp_norm_array(values: np.ndarray, cell_area: float, p: float) -> float:
    """((L/N)^2 sum |g|^p)^(1/p), computed with a max-rescaling so that tiny or huge
    amplitudes neither underflow nor overflow; p = inf gives max |g|."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(values)
    m = float(np.max(a)) if a.size else 0.0
    if m == 0.0 or not np.isfinite(m):
        return m
    if np.isinf(p):
        return m
    if p == 2:
        s = float(np.sum((a / m) ** 2))
    else:
        s = float(np.sum((a / m) ** p))
    return m * (cell_area * s) ** (1.0 / p)


def lp_norm(g: PhysicalField, p: float) -> float:
    """Discrete L^p norm with quadrature weight (L/N)^2.

    For ``p = inf`` this is the largest sampled value; it equals the true supremum
    only when a grid point hits the maximum (e.g. ``cos(2 pi x1/L)`` on any even N).
    """
    return lp_norm_array(g.values, g.grid.cell_area, p)


def random_field(
    grid: Grid,
    k_min: float,
    k_max: float,
    rms: float,
    seed: int,
    slope: float = 0.0,
) -> SpectralField:
    """Band-limited random field with Gaussian coefficients on ``k_min <= |k| <= k_max``.

    ``slope`` tilts the amplitude spectrum as ``|k|^slope``. The field is scaled so that
    ``sqrt(mean(g^2)) = rms`` and projected onto the dealiased set.
    """
    rng = np.random.default_rng(seed)
    shape = grid.spectral_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    band = (grid.kmag >= k_min) & (grid.kmag <= k_max) & grid.dealias_mask & ~grid.nyquist
    amp = np.zeros(shape)
    amp[band] = grid.kmag[band] ** slope
    c = c * amp
    # restore Hermitian symmetry on the self-conjugate column
    c = forward(grid, inverse(grid, c)) * grid.dealias_mask
    norm = l2_norm_coeffs(grid, c)
    if norm == 0:
        raise ValueError("empty band: no lattice modes between k_min and k_max")
    c *= rms * grid.L / norm
    return SpectralField(grid, c)
