"""
JSON run configuration: parsing, defaults, validation and canonical hashing.

A config is a JSON object. Only ``grid.N``, ``alpha``, ``nu`` and ``forcing`` are
required; everything else has a default (see ``DEFAULTS``). Validation collects every
violated constraint before failing. The canonical form (sorted keys, numbers as floats,
defaults applied) is what gets hashed, so equivalent configs share a hash.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

from .determining import index_range
from .solver import ForcingSpec, SolverConfig
from .spectral import Grid
from .sync import SLAVE_MODES, ICSpec

EXPERIMENTS = ("simulate", "determine", "sync", "degiorgi", "sweep")
FORMATS = ("ndjson", "csv")

DEFAULTS = {
    "experiment": "simulate",
    "grid": {"L": 1.0},
    "t_end": 1.0,
    "dt": None,
    "eps": 0.0,
    "cfl": 0.5,
    "dt_max": 0.01,
    "cfl_every": 10,
    "record_stride": 1,
    "seed": 0,
    "initial": {"k_min": 1.0, "k_max": 8.0, "rms": 1.0, "slope": 0.0, "base": "zero"},
    "determining": {"r": "auto", "c0": 1.0, "q_limit": None},
    "sync": {"slave_mode": "measured", "fixed_Q": None, "recompute_stride": 1},
    "degiorgi": {"K": 15, "p": "inf", "C": None, "n_triples": 20},
    "output": {"dir": "runs", "formats": ["ndjson"]},
}

_TOP_KEYS = set(DEFAULTS) | {"alpha", "nu", "forcing", "sweep"}
_SECTION_KEYS = {
    "grid": {"N", "L"},
    "initial": {"k_min", "k_max", "rms", "slope", "base", "seed"},
    "determining": {"r", "c0", "q_limit"},
    "sync": {"slave_mode", "fixed_Q", "recompute_stride", "seeds", "fit_window"},
    "degiorgi": {"t0", "K", "p", "C", "n_triples"},
    "output": {"dir", "formats"},
    "forcing": {"modes", "band"},
    "sweep": {"experiment", "vary", "members"},
}
_TIME_KEYS = {"time_dependent", "omega", "frequency", "period", "t", "time", "schedule"}


class ConfigError(ValueError):
    """Carries every violated constraint in ``errors``."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.errors))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _normalize(x):
    """Numbers become floats (ints included, -0.0 folded to 0.0); containers recurse."""
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, (int, float)):
        v = float(x)
        return 0.0 if v == 0 else v
    if isinstance(x, dict):
        return {str(k): _normalize(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_normalize(v) for v in x]
    raise TypeError(f"unsupported value {x!r}")


def canonical_json(data: dict) -> str:
    return json.dumps(_normalize(data), sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(data: dict) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


def set_dotted(data: dict, key: str, value) -> None:
    parts = key.split(".")
    d = data
    for p in parts[:-1]:
        d = d.setdefault(p, {})
    d[parts[-1]] = value


def _fmt_interval(lo: float, hi: float) -> str:
    return f"({lo:g}, {'inf' if math.isinf(hi) else f'{hi:g}'})"


def _as_int(x, name, errs, lo=None):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or float(x) != int(x):
        errs.append(f"{name} must be an integer, got {x!r}")
        return None
    v = int(x)
    if lo is not None and v < lo:
        errs.append(f"{name} must be >= {lo}, got {v}")
        return None
    return v


def _as_float(x, name, errs, positive=False, nonneg=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(float(x)):
        errs.append(f"{name} must be a finite number, got {x!r}")
        return None
    v = float(x)
    if positive and not v > 0:
        errs.append(f"{name} must be positive, got {v:g}")
        return None
    if nonneg and not v >= 0:
        errs.append(f"{name} must be >= 0, got {v:g}")
        return None
    return v


def _p_value(x, errs):
    if x in ("inf", "infinity", "Infinity"):
        return math.inf
    return _as_float(x, "degiorgi.p", errs, positive=True)


@dataclass
class RunConfig:
    experiment: str
    data: dict
    solver: SolverConfig | None = None
    initial: ICSpec | None = None
    initial_seed: int = 0
    r: float | str = "auto"
    c0: float = 1.0
    q_limit: int | None = None
    sync: dict = field(default_factory=dict)
    degiorgi: dict = field(default_factory=dict)
    output_dir: str = "runs"
    formats: tuple = ("ndjson",)
    members: list = field(default_factory=list)

    @property
    def canonical(self) -> str:
        return canonical_json(self.data)

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    @property
    def alpha(self) -> float:
        return self.solver.alpha

    @property
    def nu(self) -> float:
        return self.solver.nu


def _forcing(spec, errs) -> ForcingSpec | None:
    if not isinstance(spec, dict):
        errs.append("forcing must be an object with 'modes' and/or 'band'")
        return None
    timed = sorted(_TIME_KEYS & set(spec))
    if timed:
        errs.append(f"time-dependent forcing is not supported (keys {timed}); f must be time-independent")
    unknown = sorted(set(spec) - _SECTION_KEYS["forcing"] - _TIME_KEYS)
    if unknown:
        errs.append(f"unknown forcing keys {unknown}")
    modes = []
    for i, m in enumerate(spec.get("modes", []) or []):
        try:
            (k1, k2), amp, phase = m
            if float(k1) != int(k1) or float(k2) != int(k2):
                raise ValueError
            k = (int(k1), int(k2))
            if k == (0, 0):
                errs.append(f"forcing.modes[{i}] has k = (0, 0); the forcing must have zero mean")
                continue
            modes.append((k, float(amp), float(phase)))
        except (TypeError, ValueError):
            errs.append(f"forcing.modes[{i}] must be [[k1, k2], amplitude, phase] with integer k, got {m!r}")
    band = spec.get("band")
    if band is not None:
        missing = {"k_min", "k_max", "rms"} - set(band)
        if missing:
            errs.append(f"forcing.band is missing {sorted(missing)}")
            band = None
        else:
            band = {
                "k_min": float(band["k_min"]),
                "k_max": float(band["k_max"]),
                "rms": float(band["rms"]),
                "seed": int(band.get("seed", 0)),
            }
    if not modes and band is None and not timed:
        errs.append("forcing needs at least one mode or a band (use amplitude 0 for an unforced run)")
    return ForcingSpec(tuple(modes), band)


def parse_config(text: str | dict, experiment: str | None = None, seed: int | None = None) -> RunConfig:
    """Parse, apply defaults and validate. Raises ``json.JSONDecodeError`` on malformed
    text and ``ConfigError`` listing every violation otherwise."""
    raw = json.loads(text) if isinstance(text, str) else copy.deepcopy(text)
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    errs: list[str] = []
    if experiment is not None:
        raw["experiment"] = experiment
    if seed is not None:
        raw["seed"] = seed
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        errs.append(f"unknown keys {unknown}")
    for sec, keys in _SECTION_KEYS.items():
        if sec in raw and isinstance(raw[sec], dict) and sec != "forcing":
            bad = sorted(set(raw[sec]) - keys)
            if bad:
                errs.append(f"unknown keys in {sec}: {bad}")

    exp = raw.get("experiment", DEFAULTS["experiment"])
    if exp not in EXPERIMENTS:
        errs.append(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    if exp == "sweep":
        return _parse_sweep(raw, errs)

    data = _merge(DEFAULTS, raw)
    data.pop("sweep", None)
    s = _as_int(data["seed"], "seed", errs)
    s = 0 if s is None else s
    data["initial"].setdefault("seed", s)
    data["sync"].setdefault("seeds", [s + 1, s + 2])

    for key in ("alpha", "nu", "forcing"):
        if key not in raw:
            errs.append(f"missing required key '{key}'")
    if "N" not in data["grid"]:
        errs.append("missing required key 'grid.N'")

    grid = None
    N = _as_int(data["grid"].get("N", 0), "grid.N", errs) if "N" in data["grid"] else None
    L = _as_float(data["grid"]["L"], "grid.L", errs, positive=True)
    if N is not None and L is not None:
        try:
            grid = Grid(N, L)
        except ValueError as e:
            errs.append(str(e))

    alpha = _as_float(raw.get("alpha", 1.0), "alpha", errs)
    if alpha is not None and not 0 < alpha <= 2:
        errs.append(f"alpha must lie in (0, 2], got {alpha:g}")
        alpha = None
    nu = _as_float(raw.get("nu", 1.0), "nu", errs, positive=True)
    forcing = _forcing(raw["forcing"], errs) if "forcing" in raw else None
    if forcing is not None and grid is not None:
        for k, _, _ in forcing.modes:
            if max(abs(k[0]), abs(k[1])) >= grid.N // 2:
                errs.append(f"forcing mode {k} is at or beyond the Nyquist frequency of N={grid.N}")

    t_end = _as_float(data["t_end"], "t_end", errs, nonneg=True)
    dt = None if data["dt"] is None else _as_float(data["dt"], "dt", errs, positive=True)
    eps = _as_float(data["eps"], "eps", errs, nonneg=True)
    cfl = _as_float(data["cfl"], "cfl", errs, positive=True)
    if cfl is not None and cfl > 1:
        errs.append(f"cfl must lie in (0, 1], got {cfl:g}")
    dt_max = _as_float(data["dt_max"], "dt_max", errs, positive=True)
    cfl_every = _as_int(data["cfl_every"], "cfl_every", errs, lo=1)
    stride = _as_int(data["record_stride"], "record_stride", errs, lo=1)

    ini = data["initial"]
    base = ini.get("base", "zero")
    if base not in ("zero", "linear_steady"):
        errs.append(f"initial.base must be 'zero' or 'linear_steady', got {base!r}")
    kmin = _as_float(ini["k_min"], "initial.k_min", errs, nonneg=True)
    kmax = _as_float(ini["k_max"], "initial.k_max", errs, positive=True)
    if kmin is not None and kmax is not None and kmin > kmax:
        errs.append("initial.k_min must not exceed initial.k_max")
    rms = _as_float(ini["rms"], "initial.rms", errs, positive=True)
    slope = _as_float(ini["slope"], "initial.slope", errs)
    ini_seed = _as_int(ini["seed"], "initial.seed", errs)

    det = data["determining"]
    c0 = _as_float(det["c0"], "determining.c0", errs, positive=True)
    q_limit = None if det["q_limit"] is None else _as_int(det["q_limit"], "determining.q_limit", errs, lo=-1)
    r = det["r"]
    if exp in ("determine", "sync") and alpha is not None and alpha >= 2:
        errs.append("determining wavenumbers need alpha in (0, 2)")
    elif r != "auto":
        rv = _as_float(r, "determining.r", errs)
        if rv is not None and alpha is not None and alpha < 2:
            lo, hi = index_range(alpha)
            if not lo < rv < hi:
                errs.append(f"determining.r = {rv:g} is outside I_{alpha:g} = {_fmt_interval(lo, hi)}")
        r = rv

    sy = data["sync"]
    if sy["slave_mode"] not in SLAVE_MODES:
        errs.append(f"sync.slave_mode must be one of {SLAVE_MODES}, got {sy['slave_mode']!r}")
    if sy["slave_mode"] == "fixed" and sy["fixed_Q"] is None:
        errs.append("sync.slave_mode 'fixed' needs sync.fixed_Q")
    fixed_Q = None if sy["fixed_Q"] is None else _as_int(sy["fixed_Q"], "sync.fixed_Q", errs, lo=-2)
    rstride = _as_int(sy["recompute_stride"], "sync.recompute_stride", errs, lo=1)
    seeds = sy["seeds"]
    if not (isinstance(seeds, list) and len(seeds) == 2):
        errs.append(f"sync.seeds must be a list of two integers, got {seeds!r}")
        seeds = [1, 2]
    seeds = [_as_int(v, "sync.seeds[]", errs) for v in seeds]
    fit_window = sy.get("fit_window")
    if fit_window is not None and not (isinstance(fit_window, list) and len(fit_window) == 2):
        errs.append("sync.fit_window must be [t_start, t_end]")

    dg = data["degiorgi"]
    p = _p_value(dg["p"], errs)
    if p is not None and alpha is not None and not p > 2 / alpha:
        errs.append(f"degiorgi.p = {p:g} must exceed 2/alpha = {2 / alpha:g}")
    K = _as_int(dg["K"], "degiorgi.K", errs, lo=1)
    C = None if dg["C"] is None else _as_float(dg["C"], "degiorgi.C", errs, positive=True)
    n_triples = _as_int(dg["n_triples"], "degiorgi.n_triples", errs, lo=0)
    t0 = dg.get("t0")
    if t0 is None and t_end is not None:
        t0 = t_end / 2
        dg["t0"] = t0
    t0 = _as_float(t0, "degiorgi.t0", errs, positive=True) if t0 is not None else None
    if exp == "degiorgi" and t0 is not None and t_end is not None and t_end < 2 * t0:
        errs.append(f"degiorgi needs t_end >= 2 t0 (t_end={t_end:g}, t0={t0:g})")

    out = data["output"]
    formats = out["formats"]
    if not isinstance(formats, list) or not formats or any(f not in FORMATS for f in formats):
        errs.append(f"output.formats must be a nonempty subset of {FORMATS}, got {formats!r}")
        formats = ["ndjson"]
    if not isinstance(out["dir"], str) or not out["dir"]:
        errs.append("output.dir must be a nonempty string")

    if errs:
        raise ConfigError(errs)

    solver = SolverConfig(
        grid=grid, alpha=alpha, nu=nu, t_end=t_end, dt=dt, eps=eps, forcing=forcing,
        record_stride=stride, seed=s, cfl=cfl, dt_max=dt_max, cfl_every=cfl_every,
    )
    return RunConfig(
        experiment=exp,
        data=data,
        solver=solver,
        initial=ICSpec(kmin, kmax, rms, slope, base),
        initial_seed=ini_seed,
        r=r,
        c0=c0,
        q_limit=q_limit,
        sync={
            "slave_mode": sy["slave_mode"], "fixed_Q": fixed_Q, "recompute_stride": rstride,
            "seeds": tuple(seeds), "fit_window": tuple(fit_window) if fit_window else None,
        },
        degiorgi={"t0": t0, "K": K, "p": p, "C": C, "n_triples": n_triples},
        output_dir=out["dir"],
        formats=tuple(formats),
    )


def _parse_sweep(raw: dict, errs: list[str]) -> RunConfig:
    """A sweep holds a base config plus either ``vary`` (dotted key -> list of values,
    cartesian product) or ``members`` (list of override objects)."""
    sw = raw.get("sweep")
    if not isinstance(sw, dict):
        raise ConfigError(errs + ["a sweep config needs a 'sweep' object"])
    base = {k: v for k, v in raw.items() if k not in ("sweep", "experiment")}
    base["experiment"] = sw.get("experiment", "simulate")
    if base["experiment"] == "sweep":
        errs.append("sweeps cannot be nested")
    overrides: list[dict] = []
    if "members" in sw:
        if not isinstance(sw["members"], list):
            errs.append("sweep.members must be a list of objects")
        else:
            overrides.extend(sw["members"])
    if "vary" in sw:
        vary = sw["vary"]
        if not isinstance(vary, dict) or not all(isinstance(v, list) and v for v in vary.values()):
            errs.append("sweep.vary must map dotted keys to nonempty lists")
        else:
            combos = [{}]
            for key in sorted(vary):
                combos = [dict(c, **{key: v}) for c in combos for v in vary[key]]
            overrides.extend(combos)
    if not overrides:
        errs.append("sweep needs 'vary' or 'members'")
    members = []
    for i, ov in enumerate(overrides):
        d = copy.deepcopy(base)
        for key, v in (ov.items() if isinstance(ov, dict) else []):
            set_dotted(d, key, v)
        try:
            members.append(parse_config(d))
        except ConfigError as e:
            errs.extend(f"sweep member {i}: {m}" for m in e.errors)
    if errs:
        raise ConfigError(errs)
    data = _merge({"output": DEFAULTS["output"]}, raw)
    data["experiment"] = "sweep"
    out = data["output"]
    return RunConfig(
        experiment="sweep",
        data=data,
        output_dir=out.get("dir", "runs"),
        formats=tuple(out.get("formats", ["ndjson"])),
        members=members,
    )
