"""
Experiment execution and persistence.

``run`` executes one validated config and writes its outputs under
``<out>/<experiment>-<hash12>/``: ``series.ndjson`` (and ``series.csv`` when requested),
``summary.json`` and, where there is a final state, ``final.sqgd``. Every run appends one
``RunRecord`` line to ``<out>/runs.ndjson``. ``sweep`` runs members in separate processes.

Everything except ``runs.ndjson`` (which carries wall times) is a deterministic function
of the config, so re-running a config reproduces the series files byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import multiprocessing as mp
import os
import time
from dataclasses import asdict, dataclass, field, replace
from multiprocessing.connection import wait
from pathlib import Path

import numpy as np

from ._version import __version__
from .config import RunConfig, config_hash
from .degiorgi import build_ladder, level_energy_inequality_residual, linfty_bound, verify_iteration
from .determining import (
    DeterminingParams,
    SelectionError,
    absorbing_radii,
    apriori_bound_subcritical,
    determining_wavenumber,
    index_range,
    select_r,
    sup_bound,
)
from .solver import BlowUpError, energy_budget_residual, energy_envelope, save_checkpoint, simulate
from .spectral import inverse, lp_norm_array
from .sync import SyncConfig, UndefinedWavenumberError, run_synced_pair

log = logging.getLogger(__name__)

NUMERICAL = ("blowup", "undefined", "numerical")


@dataclass
class RunRecord:
    config_hash: str
    experiment: str
    status: str
    code_version: str = __version__
    wall_time: float = 0.0
    output_dir: str = ""
    series_files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self) -> str:
        return json.dumps(_clean(asdict(self)), sort_keys=True)


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    return x


def _ndjson(rows: list[dict]) -> str:
    return "".join(json.dumps(_clean(r), sort_keys=True) + "\n" for r in rows)


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        keys = sorted({k for r in rows for k in r})
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else repr(r[k]) if isinstance(r.get(k), float) else r[k]) for k in keys})
    return buf.getvalue()


def _write_series(d: Path, name: str, rows: list[dict], formats) -> list[str]:
    rows = [_clean(r) for r in rows]
    files = []
    if "ndjson" in formats:
        p = d / f"{name}.ndjson"
        p.write_text(_ndjson(rows))
        files.append(str(p))
    if "csv" in formats:
        p = d / f"{name}.csv"
        p.write_text(_csv(rows))
        files.append(str(p))
    return files


def resolve_r(cfg: RunConfig, theta0) -> float:
    """``r = "auto"``: ``select_r`` for alpha > 1 with M the larger of the initial sup
    bound and the L^inf absorbing radius; the midpoint 2 r_min for alpha <= 1."""
    if cfg.r != "auto":
        return float(cfg.r)
    a = cfg.alpha
    lo, hi = index_range(a)
    if a <= 1:
        return 2.0 * lo
    s = cfg.solver
    R_inf = absorbing_radii(s.forcing.field(s.grid), s.nu, a).R_inf
    return select_r(a, max(sup_bound(theta0), R_inf), s.nu, s.grid.L, cfg.c0)


def _series_rows(traj) -> list[dict]:
    keys = list(traj.series)
    cols = [traj.series[k] for k in keys]
    return [dict(zip(keys, vals)) for vals in zip(*cols)]


def _simulate(cfg: RunConfig, d: Path):
    s = cfg.solver
    th0 = cfg.initial.build(s, cfg.initial_seed)
    last = {}
    traj = simulate(replace(s, keep_snapshots=False), th0, [lambda t, th: last.update(t=t, th=th)])
    env = energy_envelope(traj)
    bud = energy_budget_residual(traj)
    save_checkpoint(d / "final.sqgd", last["th"], s.alpha, s.nu, last["t"])
    summary = {
        "t_end": last["t"],
        "steps": len(traj.series["t"]) - 1,
        "l2_final": traj.series["l2"][-1],
        "linf_final": traj.series["linf"][-1],
        "l2_max": float(np.max(traj.series["l2"])),
        "envelope_holds": env.holds,
        "budget_max_relative": bud.max_relative,
    }
    return _series_rows(traj), summary


def _determine(cfg: RunConfig, d: Path):
    s = cfg.solver
    th0 = cfg.initial.build(s, cfg.initial_seed)
    r = resolve_r(cfg, th0)
    params = DeterminingParams(s.alpha, r, s.nu, s.grid.L, cfg.c0)
    rows, last = [], {}

    def observe(t, th):
        res = determining_wavenumber(th, params, cfg.q_limit)
        rows.append({
            "t": t, "Q": res.Q,
            "lambda": res.lam if res.defined else None,
            "margin1": res.margin1 if res.defined else None,
            "margin2": res.margin2 if res.defined else None,
        })
        last.update(t=t, th=th)

    traj = simulate(replace(s, keep_snapshots=False), th0, [observe])
    save_checkpoint(d / "final.sqgd", last["th"], s.alpha, s.nu, last["t"])
    Qs = [row["Q"] for row in rows if row["Q"] is not None]
    R = absorbing_radii(s.forcing.field(s.grid), s.nu, s.alpha)
    summary = {
        "r": r,
        "l": params.l,
        "c": params.c,
        "n_snapshots": len(rows),
        "n_undefined": len(rows) - len(Qs),
        "Q_min": min(Qs) if Qs else None,
        "Q_max": max(Qs) if Qs else None,
        "Q_mean": float(np.mean(Qs)) if Qs else None,
        "R2": R.R2,
        "R_inf": R.R_inf,
        "l2_final": traj.series["l2"][-1],
        "linf_final": traj.series["linf"][-1],
    }
    if 1 < s.alpha < 2:
        summary["apriori_bound"] = apriori_bound_subcritical(s.alpha, R.R_inf, s.nu, s.grid.L, cfg.c0)
    return rows, summary


def _sync(cfg: RunConfig, d: Path):
    s = cfg.solver
    sy = cfg.sync
    th0 = cfg.initial.build(s, sy["seeds"][0])
    r = resolve_r(cfg, th0)
    params = DeterminingParams(s.alpha, r, s.nu, s.grid.L, cfg.c0)
    sc = SyncConfig(s, params, sy["slave_mode"], sy["fixed_Q"], sy["recompute_stride"], sy["seeds"], cfg.initial)
    tr = run_synced_pair(sc, fit_window=sy["fit_window"])
    b = tr.besov
    summary = {
        "r": r,
        "l": params.l,
        "nu": s.nu,
        "besov_initial": b[0],
        "besov_final": b[-1],
        "decay_ratio": b[-1] / b[0] if b[0] > 0 else 0.0,
        "max_low_residual": max(tr.low_residual),
        "Q_max": max((q for q in tr.Q if q is not None), default=None),
    }
    if tr.fit is not None:
        summary.update(rate=tr.fit.rate, c_calibrated=tr.fit.c_calibrated, r2=tr.fit.r2)
    return tr.records(), summary


def _degiorgi(cfg: RunConfig, d: Path):
    s = cfg.solver
    dg = cfg.degiorgi
    th0 = cfg.initial.build(s, cfg.initial_seed)
    traj = simulate(s, th0)
    save_checkpoint(d / "final.sqgd", traj.snapshots[-1], s.alpha, s.nu, traj.times[-1])
    rows, summary = [], {"t0": dg["t0"], "K": dg["K"]}
    for sign in ("plus", "minus"):
        lad = build_ladder(traj, dg["t0"], dg["K"], dg["p"], sign, dg["C"])
        rep = verify_iteration(lad)
        for row in rep.rows:
            rows.append(dict(asdict(row), sign=sign))
        summary[sign] = {
            "M": rep.M, "C": rep.C, "delta": rep.delta, "m": rep.m,
            "U_ratio": rep.U_ratio, "sup_at_t0": rep.sup_at_t0,
            "sup_ok": rep.sup_ok, "all_hold": rep.all_hold,
        }
    g = s.grid
    times = np.asarray(traj.times)
    f_norm = lp_norm_array(inverse(g, traj.forcing.coeffs), g.cell_area, dg["p"])
    ratio = [
        traj.series["linf"][i] / linfty_bound(traj.series["l2"][0], f_norm, dg["p"], s.nu, s.alpha, t)
        for i, t in enumerate(traj.series["t"]) if t > 0
    ]
    summary["linf_ratio_max"] = max(ratio) if ratio else None
    rng = np.random.default_rng(s.seed)
    worst = math.inf
    n = len(times)
    top = float(np.max(traj.series["linf"]))
    for j in range(dg["n_triples"] if n > 1 else 0):
        i1 = int(rng.integers(0, n - 1))
        i2 = int(rng.integers(i1 + 1, n))
        lam = float(rng.uniform(0, 0.9)) * top
        res = level_energy_inequality_residual(traj, lam, times[i1], times[i2], ("plus", "minus")[j % 2])
        worst = min(worst, res.relative)
    summary["level_residual_min_relative"] = worst if math.isfinite(worst) else None
    return rows, summary


_EXPERIMENTS = {"simulate": _simulate, "determine": _determine, "sync": _sync, "degiorgi": _degiorgi}


def _status(e: BaseException) -> str:
    if isinstance(e, BlowUpError):
        return "blowup"
    if isinstance(e, UndefinedWavenumberError):
        return "undefined"
    if isinstance(e, (SelectionError, FloatingPointError, OverflowError)):
        return "numerical"
    if isinstance(e, OSError):
        return "io_error"
    return "error"


def run_dir(cfg: RunConfig, out: str | os.PathLike) -> Path:
    return Path(out) / f"{cfg.experiment}-{cfg.hash[:12]}"


def run(cfg: RunConfig, out: str | os.PathLike | None = None, *, out_dir: Path | None = None, append: bool = True) -> RunRecord:
    """Execute one non-sweep config. Numerical failures (blow-up, undefined wavenumber,
    no admissible r) become a failure record rather than an exception."""
    if cfg.experiment == "sweep":
        raise ValueError("sweep configs go through sweep(cfg.members, ...)")
    out = Path(out if out is not None else cfg.output_dir)
    d = out_dir or run_dir(cfg, out)
    rec = RunRecord(cfg.hash, cfg.experiment, "ok", output_dir=str(d))
    t0 = time.perf_counter()
    try:
        d.mkdir(parents=True, exist_ok=True)
        (d / "config.json").write_text(cfg.canonical + "\n")
        rows, summary = _EXPERIMENTS[cfg.experiment](cfg, d)
        rec.series_files = _write_series(d, "series", rows, cfg.formats)
        (d / "summary.json").write_text(json.dumps(_clean(summary), sort_keys=True, indent=1) + "\n")
        rec.summary = _clean(summary)
    except Exception as e:
        rec.status = _status(e)
        rec.error = f"{type(e).__name__}: {e}"
        log.warning("run %s failed: %s", cfg.hash[:12], rec.error)
    rec.wall_time = time.perf_counter() - t0
    if append:
        append_record(out, rec)
    return rec


def append_record(out: str | os.PathLike, rec: RunRecord) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "runs.ndjson", "a") as fh:
        fh.write(rec.to_json() + "\n")


def _member_main(conn, cfg: RunConfig, out: str, d: str) -> None:
    try:
        conn.send(asdict(run(cfg, out, out_dir=Path(d), append=False)))
    finally:
        conn.close()


def _summary_row(i: int, cfg: RunConfig, rec: RunRecord) -> dict:
    s = cfg.solver
    row = {
        "member": i, "config_hash": rec.config_hash, "status": rec.status,
        "alpha": s.alpha, "nu": s.nu, "N": s.grid.N, "seed": s.seed,
    }
    for k, v in rec.summary.items():
        if not isinstance(v, (dict, list)):
            row[k] = v
    return row


def sweep(
    members: list[RunConfig],
    out: str | os.PathLike | None = None,
    workers: int | None = None,
    root_cfg: RunConfig | None = None,
) -> list[RunRecord]:
    """Run members in separate processes, at most ``workers`` at a time.

    A member that raises, or whose process dies, yields a failure record; siblings are
    unaffected. Records come back in member order and are appended to ``runs.ndjson``
    by this (parent) process only. A summary table lands in ``sweep-<hash12>/``.
    """
    if not members:
        return []
    out = Path(out if out is not None else (root_cfg.output_dir if root_cfg else members[0].output_dir))
    tag = root_cfg.hash if root_cfg is not None else config_hash({"members": [m.data for m in members]})
    sdir = out / f"sweep-{tag[:12]}"
    sdir.mkdir(parents=True, exist_ok=True)
    workers = max(1, min(workers or os.cpu_count() or 1, len(members)))

    ctx = mp.get_context("spawn")
    pending = list(enumerate(members))
    running: dict = {}
    results: list[RunRecord | None] = [None] * len(members)
    while pending or running:
        while pending and len(running) < workers:
            i, m = pending.pop(0)
            d = sdir / f"m{i:03d}-{m.experiment}-{m.hash[:12]}"
            rconn, wconn = ctx.Pipe(duplex=False)
            p = ctx.Process(target=_member_main, args=(wconn, m, str(out), str(d)), daemon=True)
            p.start()
            wconn.close()
            running[rconn] = (i, p, d, time.perf_counter())
        for rconn in wait(list(running)):
            i, p, d, started = running.pop(rconn)
            try:
                results[i] = RunRecord(**rconn.recv())
            except (EOFError, OSError):
                pass
            rconn.close()
            p.join()
            if results[i] is None:
                results[i] = RunRecord(
                    members[i].hash, members[i].experiment, "crashed",
                    wall_time=time.perf_counter() - started, output_dir=str(d),
                    error=f"worker exited with code {p.exitcode}",
                )
    for rec in results:
        append_record(out, rec)
    table = [_summary_row(i, m, r) for i, (m, r) in enumerate(zip(members, results))]
    _write_series(sdir, "summary", table, ("ndjson", "csv"))
    return results
