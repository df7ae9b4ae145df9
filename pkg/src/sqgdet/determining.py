"""
Determining wavenumber of a snapshot and the constants and a-priori bounds around it.

For ``r`` in the admissible interval ``I_alpha`` the wavenumber is the smallest dyadic
``lambda_q = 2^q / L`` (``q >= -1``) such that

    (1)  lambda_p^{1 - alpha + 2/r} ||theta_p||_r  <  c_{alpha,r} nu   for every p > q,
    (2)  lambda_q^{-alpha} sum_{p <= q} lambda_p ||theta_p||_inf  <  c_{alpha,r} nu.

Shells above the grid's last nonempty shell are zero. Condition (1) is then vacuous and
the sum in (2) stops growing, so the scan continues past the grid in closed form: the
smallest ``q`` with ``lambda_q^alpha > S / (c nu)``. Pass ``q_limit`` to cap the scan and
get an undefined result instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .littlewood_paley import shell_fields, shell_system
from .spectral import SpectralField, inverse, l2_norm_coeffs, lp_norm_array


def index_range(alpha: float) -> tuple[float, float]:
    """Open interval of admissible integrability exponents ``r``."""
    if not 0 < alpha < 2:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    if alpha <= 1:
        return (4.0 / alpha - 1.0, math.inf)
    return (2.0 * alpha / (alpha - 1.0), 4.0 / (alpha - 1.0))


def _check_r(alpha: float, r: float) -> None:
    lo, hi = index_range(alpha)
    if not lo < r < hi:
        raise ValueError(f"r={r} is outside I_{alpha:g} = ({lo:g}, {hi:g})")


def little_l(alpha: float, r: float) -> float:
    _check_r(alpha, r)
    if alpha <= 1:
        return alpha * (r + 1.0) / 2.0
    return 2.0 * alpha / (alpha - 1.0)


def c_alpha_r(alpha: float, r: float, c0: float = 1.0) -> float:
    if not c0 > 0:
        raise ValueError(f"c0 must be positive, got {c0}")
    _check_r(alpha, r)
    if alpha <= 1:
        base = 1.0 - 2.0 ** (2.0 / (r + 1.0) - 2.0 / r)
        return c0 / (alpha**2 * (r + 1.0) ** 2) * base ** (alpha * (r + 1.0) / 2.0)
    base = 1.0 - 2.0 ** ((alpha - 1.0) / 2.0 - 2.0 / r)
    return c0 * (alpha - 1.0) ** 2 * base ** (2.0 * alpha / (alpha - 1.0))


@dataclass(frozen=True)
class DeterminingParams:
    alpha: float
    r: float
    nu: float
    L: float = 1.0
    c0: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        l, r, a = little_l(self.alpha, self.r), self.r, self.alpha
        checks = {
            "2 <= l": 2 <= l,
            "l <= r": l <= r,
            "r < 2l/alpha": r < 2 * l / a,
            "2/r + alpha/l > alpha - 1": 2 / r + a / l > a - 1,
            "1 + 2/r - alpha/l > 0": 1 + 2 / r - a / l > 0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"(alpha={a}, r={r}, l={l}) violates: {', '.join(bad)}")

    @property
    def l(self) -> float:
        return little_l(self.alpha, self.r)

    @property
    def c(self) -> float:
        return c_alpha_r(self.alpha, self.r, self.c0)

    @property
    def threshold(self) -> float:
        return self.c * self.nu


@dataclass(frozen=True)
class WavenumberResult:
    """Outcome of a scan. ``Q is None`` marks an undefined wavenumber."""

    Q: int | None
    lam: float
    margin1: float
    margin2: float

    @property
    def defined(self) -> bool:
        return self.Q is not None


UNDEFINED = WavenumberResult(None, math.inf, math.nan, math.nan)


def _dyadic(q: int, L: float) -> float:
    try:
        return 2.0**q / L
    except OverflowError:
        return math.inf


def _scan(
    norms_r: np.ndarray,
    norms_inf: np.ndarray,
    alpha: float,
    exponent: float,
    thr1: float,
    thr2: float,
    L: float,
    q_limit: int | None,
) -> WavenumberResult:
    """Minimal q with both conditions; arrays are indexed by shell q + 1."""
    q_max = len(norms_r) - 2
    lhs1 = [_dyadic(p, L) ** exponent * float(norms_r[p + 1]) for p in range(-1, q_max + 1)]
    if not all(math.isfinite(v) for v in lhs1) or not np.all(np.isfinite(norms_inf)):
        return UNDEFINED
    failing = [p for p in range(-1, q_max + 1) if not lhs1[p + 1] < thr1]
    q_first = max(failing) if failing else -1

    def result(q, lhs2):
        tail = lhs1[q + 2 :] if q + 2 <= len(lhs1) else []
        m1 = thr1 - max(tail) if tail else thr1
        return WavenumberResult(q, _dyadic(q, L), m1, thr2 - lhs2)

    s = 0.0
    partial = []
    for p in range(-1, q_max + 1):
        s += _dyadic(p, L) * float(norms_inf[p + 1])
        partial.append(s)
    for q in range(q_first, q_max + 2):
        if q_limit is not None and q > q_limit:
            return UNDEFINED
        lhs2 = _dyadic(q, L) ** (-alpha) * partial[min(q, q_max) + 1]
        if lhs2 < thr2:
            return result(q, lhs2)

    # beyond the grid: condition (1) is vacuous and the sum is frozen at s
    if not thr2 > 0:
        return UNDEFINED
    if s == 0.0:
        q = q_max + 2
    else:
        est = math.log2(L) + (math.log2(s) - math.log2(thr2)) / alpha
        q = max(q_max + 2, int(math.floor(est)) - 2)
        while q > q_max + 2 and _dyadic(q - 1, L) ** (-alpha) * s < thr2:
            q -= 1
    while not _dyadic(q, L) ** (-alpha) * s < thr2:
        q += 1
    if q_limit is not None and q > q_limit:
        return UNDEFINED
    return result(q, _dyadic(q, L) ** (-alpha) * s)


def shell_norm_pair(theta: SpectralField, r: float) -> tuple[np.ndarray, np.ndarray]:
    """(||theta_q||_r, ||theta_q||_inf) for q = -1..q_max, from one batched transform."""
    fields = shell_fields(theta)
    area = theta.grid.cell_area
    nr = np.array([lp_norm_array(f, area, r) for f in fields])
    ninf = np.max(np.abs(fields), axis=(1, 2))
    return nr, ninf


def determining_wavenumber(
    theta: SpectralField, params: DeterminingParams, q_limit: int | None = None
) -> WavenumberResult:
    nr, ninf = shell_norm_pair(theta, params.r)
    thr = params.threshold
    return _scan(nr, ninf, params.alpha, 1 - params.alpha + 2 / params.r, thr, thr, params.L, q_limit)


def brute_force_wavenumber(
    theta: SpectralField, params: DeterminingParams, q_cap: int = 1000
) -> int | None:
    """Exhaustive reference scan: test both conditions literally for every q up to q_cap."""
    q_max = shell_system(theta.grid).q_max
    nr, ninf = shell_norm_pair(theta, params.r)
    a, r, L = params.alpha, params.r, params.L
    thr = params.threshold

    def norm(arr, p):
        return float(arr[p + 1]) if p <= q_max else 0.0

    for q in range(-1, q_cap + 1):
        ok1 = True
        for p in range(q + 1, q_max + 1):
            if not (2.0**p / L) ** (1 - a + 2 / r) * norm(nr, p) < thr:
                ok1 = False
                break
        if not ok1:
            continue
        s = 0.0
        for p in range(-1, min(q, q_max) + 1):
            s += (2.0**p / L) * norm(ninf, p)
        if (2.0**q / L) ** (-a) * s < thr:
            return q
    return None


def subcritical_wavenumber(
    theta: SpectralField,
    alpha: float,
    nu: float,
    L: float = 1.0,
    c0: float = 1.0,
    r: float | None = None,
    q_limit: int | None = None,
) -> WavenumberResult:
    """Limiting wavenumber at r0 = 4/(alpha-1), with the constant c_{alpha,r} of ``r``.

    ``r`` defaults to ``select_r`` for the bound ``M`` given by the field's largest
    sup norm (whole field or single shell).
    """
    if not 1 < alpha < 2:
        raise ValueError(f"the limiting wavenumber needs alpha in (1, 2), got {alpha}")
    r0 = 4.0 / (alpha - 1.0)
    nr0, ninf = shell_norm_pair(theta, r0)
    if r is None:
        r = select_r(alpha, sup_bound(theta), nu, L, c0)
    c = c_alpha_r(alpha, r, c0)
    return _scan(nr0, ninf, alpha, (1 - alpha) / 2, c * nu / 2, c * nu, L, q_limit)


def sup_bound(theta: SpectralField) -> float:
    """max(||theta||_inf, max_q ||theta_q||_inf) on the grid."""
    fields = shell_fields(theta)
    whole = float(np.max(np.abs(inverse(theta.grid, theta.coeffs))))
    return max(whole, float(np.max(np.abs(fields))) if fields.size else 0.0)


def log_N(alpha: float, r: float, M: float, nu: float, L: float, c0: float) -> float:
    """log N(r), N(r) = (L M / (c_{alpha,r} nu))^{1/(alpha - 1 - 2/r)}."""
    if M <= 0:
        return -math.inf
    c = c_alpha_r(alpha, r, c0)
    return (math.log(L * M) - math.log(c * nu)) / (alpha - 1.0 - 2.0 / r)


def _margin_ok(alpha, r, M, nu, L, c0) -> bool:
    r0 = 4.0 / (alpha - 1.0)
    return (2.0 / r - 2.0 / r0) * log_N(alpha, r, M, nu, L, c0) <= math.log(4.0 / 3.0)


class SelectionError(RuntimeError):
    pass


def select_r(
    alpha: float,
    M: float,
    nu: float,
    L: float = 1.0,
    c0: float = 1.0,
    lam_observed: float | None = None,
    max_halvings: int = 60,
    bisect_iters: int = 60,
) -> float:
    """An r < r0 for which N(r)^{2/r - 2/r0} <= 4/3.

    Starts at the midpoint of I_alpha (returned directly when ``lam_observed >= N(r)``),
    halves the gap ``r0 - r`` until the margin holds, then bisects the last halving to
    return the admissible r farthest from r0.
    """
    if not 1 < alpha < 2:
        raise ValueError(f"select_r needs alpha in (1, 2), got {alpha}")
    if not M >= 0:
        raise ValueError(f"M must be >= 0, got {M}")
    lo, r0 = index_range(alpha)
    gap = (r0 - lo) / 2.0
    if lam_observed is not None and lam_observed > 0:
        if math.log(lam_observed) >= log_N(alpha, r0 - gap, M, nu, L, c0):
            return r0 - gap
    if _margin_ok(alpha, r0 - gap, M, nu, L, c0):
        return r0 - gap
    bad = gap
    for _ in range(max_halvings):
        gap /= 2.0
        if r0 - gap == r0:
            break
        if _margin_ok(alpha, r0 - gap, M, nu, L, c0):
            good = gap
            for _ in range(bisect_iters):
                mid = 0.5 * (good + bad)
                if _margin_ok(alpha, r0 - mid, M, nu, L, c0):
                    good = mid
                else:
                    bad = mid
            return r0 - good
        bad = gap
    raise SelectionError(
        f"no admissible r found: alpha={alpha}, M={M}, nu={nu}, L={L}, c0={c0}, "
        f"last gap={gap:.3g}, log N={log_N(alpha, r0 - gap, M, nu, L, c0):.3g}"
    )


class AbsorbingRadii(NamedTuple):
    R2: float
    R_inf: float


def _radius_exponents(alpha: float, p: float) -> tuple[float, float]:
    if math.isinf(p):
        return 1.0 / (1.0 + alpha), alpha / (1.0 + alpha)
    d = p + p * alpha - 2.0
    return p / d, (p * alpha - 2.0) / d


def absorbing_radii(f: SpectralField, nu: float, alpha: float, p: float = math.inf) -> AbsorbingRadii:
    """L^2 and L^inf absorbing radii; R_inf carries proportionality constant 1."""
    if not p > 2.0 / alpha:
        raise ValueError(f"p must exceed 2/alpha = {2.0 / alpha:g}, got {p}")
    g = f.grid
    R2 = l2_norm_coeffs(g, f.coeffs * g.symbol(-alpha / 2)) / (nu * (1.0 / g.L) ** (alpha / 2))
    fp = lp_norm_array(inverse(g, f.coeffs), g.cell_area, p)
    if fp == 0.0 or R2 == 0.0:
        return AbsorbingRadii(R2, 0.0)
    e1, e2 = _radius_exponents(alpha, p)
    return AbsorbingRadii(R2, (fp / nu) ** e1 * R2**e2)


@dataclass
class AbsorbingEstimates:
    """Radii and bounds collected for one run; ``None`` entries were not computed."""

    R2: float
    R_inf: float
    p: float
    R_Ch: float | None = None
    h: float | None = None
    N_r: float | None = None
    r0: float | None = None
    t_L2: float | None = None
    t_Linf: float | None = None


def apriori_bound_subcritical(alpha: float, R_inf: float, nu: float, L: float = 1.0, c0: float = 1.0) -> float:
    if not 1 < alpha < 2:
        raise ValueError(f"alpha must lie in (1, 2), got {alpha}")
    X = 2.0 * R_inf / ((alpha - 1.0) ** 2 * c0 * nu)
    if X == 0.0:
        return 0.0
    return max(L * X ** (2.0 / (alpha - 1.0)), X ** (1.0 / (alpha - 1.0)))


@dataclass(frozen=True)
class CriticalBound:
    bound: float
    log_bound: float
    h: float
    r: float
    R_Ch: float


def _log_critical(h, r, R, c0, nu):
    t1 = math.log((r + 1) ** 2 * R / (2 * c0 * nu)) / (h - 2 / r)
    t2 = math.log(2 * (r + 1) ** 2 * R / (c0 * nu)) / h
    return max(t1, t2)


def apriori_bound_critical(
    f_inf: float,
    nu: float,
    theta0_inf: float,
    c0: float = 1.0,
    c1: float = 1.0,
    c2: float = 1.0,
    r: float | None = None,
) -> CriticalBound:
    """Wavenumber bound for alpha = 1 from the C^h estimate (length scale set to 1).

    ``r = None`` picks the r > max(3, 2/h) minimizing the bound.
    """
    if not (f_inf >= 0 and theta0_inf >= 0 and nu > 0 and c0 > 0 and c1 > 0 and c2 > 0):
        raise ValueError("inputs must be nonnegative with nu, c0, c1, c2 positive")
    den = c1 * theta0_inf + c2 * f_inf / nu
    h = 0.25 if den == 0 else min(nu / den, 0.25)
    R = theta0_inf + f_inf / nu
    if R == 0:
        r_use = r if r is not None else max(3.0, 2.0 / h) * 2
        return CriticalBound(0.0, -math.inf, h, r_use, 0.0)
    if r is not None:
        if not (r > 3 and h > 2.0 / r):
            raise ValueError(f"bound unavailable: need r > 3 and h > 2/r (h={h:.4g}, r={r})")
        lb = _log_critical(h, r, R, c0, nu)
    else:
        s_hi = min(h, 2.0 / 3.0)
        res = minimize_scalar(
            lambda s: _log_critical(h, 2.0 / s, R, c0, nu),
            bounds=(1e-9 * s_hi, s_hi * (1 - 1e-9)),
            method="bounded",
            options={"xatol": 1e-12 * s_hi},
        )
        r, lb = 2.0 / float(res.x), float(res.fun)
    bound = math.exp(lb) if lb < 700 else math.inf
    return CriticalBound(bound, lb, h, r, R)


def holder_proxy_norm(theta: SpectralField, h: float) -> float:
    """sup_q lambda_q^h ||theta_q||_inf, the B^h_{inf,inf} shell proxy for the C^h norm."""
    ss = shell_system(theta.grid)
    fields = shell_fields(theta)
    ninf = np.max(np.abs(fields), axis=(1, 2))
    return float(np.max(ss.lambdas() ** h * ninf))


@dataclass
class WavenumberTrace:
    times: list = field(default_factory=list)
    results: list = field(default_factory=list)

    def append(self, t: float, res: WavenumberResult) -> None:
        self.times.append(float(t))
        self.results.append(res)

    @property
    def Q(self) -> np.ndarray:
        return np.array([np.nan if r.Q is None else r.Q for r in self.results], dtype=float)

    @property
    def lam(self) -> np.ndarray:
        return np.array([r.lam for r in self.results])

    @property
    def undefined(self) -> np.ndarray:
        return np.array([not r.defined for r in self.results])

    def records(self) -> list[dict]:
        return [
            {
                "t": t,
                "Q": r.Q,
                "lambda": r.lam if r.defined else None,
                "margin1": r.margin1 if r.defined else None,
                "margin2": r.margin2 if r.defined else None,
            }
            for t, r in zip(self.times, self.results)
        ]


def wavenumber_trace(
    times: Sequence[float], snapshots: Sequence[SpectralField], params: DeterminingParams
) -> WavenumberTrace:
    tr = WavenumberTrace()
    for t, s in zip(times, snapshots):
        tr.append(t, determining_wavenumber(s, params))
    return tr
