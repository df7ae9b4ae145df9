import json

import pytest

from sqgdet import cli
from sqgdet.config import ConfigError, parse_config
from sqgdet.runner import run, sweep

MINIMAL = {"grid": {"N": 16}, "alpha": 1.0, "nu": 0.1, "forcing": {"modes": [[[1, 0], 1.0, 0.0]]}}


def cfg_with(**over):
    d = json.loads(json.dumps(MINIMAL))
    d.update(over)
    return d


def test_minimal_config_defaults():
    cfg = parse_config(json.dumps(MINIMAL))
    assert cfg.experiment == "simulate"
    assert cfg.solver.dt is None and cfg.r == "auto"
    assert cfg.c0 == 1.0 and tuple(cfg.formats) == ("ndjson",)
    assert cfg.initial_seed == 0 and tuple(cfg.sync["seeds"]) == (1, 2)


def test_r_outside_index_range_rejected():
    with pytest.raises(ConfigError) as e:
        parse_config(cfg_with(experiment="determine", determining={"r": 2}))
    assert "I_1 = (3, inf)" in str(e.value)


def test_canonical_round_trip():
    cfg = parse_config(json.dumps(MINIMAL))
    again = parse_config(cfg.canonical)
    assert again.hash == cfg.hash and again.canonical == cfg.canonical
    # numbers are normalized: 1 and 1.0 hash alike
    assert parse_config(cfg_with(nu=0.1, alpha=1)).hash == cfg.hash


def test_every_violation_listed():
    bad = cfg_with(alpha=3.0, nu=-1.0, bogus=1, forcing={"modes": [[[1, 0], 1.0, 0.0]], "omega": 2.0})
    with pytest.raises(ConfigError) as e:
        parse_config(bad)
    msgs = e.value.errors
    assert any("alpha" in m for m in msgs) and any("nu" in m for m in msgs)
    assert any("bogus" in m for m in msgs) and any("time-dependent" in m for m in msgs)
    with pytest.raises(json.JSONDecodeError):
        parse_config("{not json")


def test_degiorgi_window_validated():
    with pytest.raises(ConfigError, match="t_end"):
        parse_config(cfg_with(experiment="degiorgi", t_end=1.0, degiorgi={"t0": 0.8}))
    with pytest.raises(ConfigError, match="2/alpha"):
        parse_config(cfg_with(experiment="degiorgi", degiorgi={"p": 1.5}))


def series_bytes(rec):
    return open([f for f in rec.series_files if f.endswith(".ndjson")][0], "rb").read()


def test_determinism_byte_identical(tmp_path):
    cfg = parse_config(cfg_with(t_end=0.2), seed=11)
    a = run(cfg, tmp_path / "a")
    b = run(cfg, tmp_path / "b")
    assert a.ok and b.ok
    assert series_bytes(a) == series_bytes(b)
    lines = (tmp_path / "a" / "runs.ndjson").read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["config_hash"] == cfg.hash


def test_sweep_of_one_equals_run(tmp_path):
    cfg = parse_config(cfg_with(t_end=0.2))
    direct = run(cfg, tmp_path / "run")
    (via,) = sweep([cfg], tmp_path / "sweep", workers=1)
    assert via.ok and via.config_hash == direct.config_hash
    assert series_bytes(via) == series_bytes(direct)
    assert via.summary == direct.summary


def test_nu_sweep_summary_table(tmp_path):
    # amplitudes sit near c nu (about 2.6e-24 at nu = 0.1), where the determining wavenumber is resolved
    base = cfg_with(experiment="sync", grid={"N": 32}, alpha=1.2, t_end=2.2, dt=0.022, determining={"r": 16},
                    initial={"k_max": 10, "rms": 1.3e-25, "slope": -1, "base": "linear_steady"},
                    forcing={"modes": [[[1, 0], 9.6e-24, 0.0]]})
    root = parse_config({**base, "experiment": "sweep", "sweep": {"experiment": "sync", "vary": {"nu": [0.1, 0.2]}}})
    recs = sweep(root.members, tmp_path, workers=2, root_cfg=root)
    assert [r.status for r in recs] == ["ok", "ok"]
    rows = [json.loads(x) for x in (tmp_path / f"sweep-{root.hash[:12]}" / "summary.ndjson").read_text().splitlines()]
    assert [r["nu"] for r in rows] == [0.1, 0.2]
    assert all(r["c_calibrated"] > 0 for r in rows)
    # at nu = 0.2 the same amplitudes fall below c nu, so nothing is slaved (Q = -1)
    assert rows[0]["decay_ratio"] < 1e-6 and rows[1]["Q_max"] == -1
    assert (tmp_path / f"sweep-{root.hash[:12]}" / "summary.csv").exists()


def test_failed_member_does_not_abort_siblings(tmp_path):
    good = parse_config(cfg_with(t_end=0.1))
    blow = parse_config(cfg_with(t_end=5.0, dt=0.05, initial={"rms": 1e6}))
    recs = sweep([blow, good], tmp_path, workers=2)
    assert recs[0].status == "blowup" and recs[0].error
    assert recs[1].ok
    assert len((tmp_path / "runs.ndjson").read_text().splitlines()) == 2


def write(tmp_path, data, name="c.json"):
    p = tmp_path / name
    p.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(p)


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "out")
    assert cli.main(["simulate", "--config", write(tmp_path, cfg_with(t_end=0.05)), "--out", out]) == 0
    rec = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert rec["status"] == "ok"
    assert cli.main(["simulate", "--config", write(tmp_path, "{oops"), "--out", out]) == 2
    bad_r = cfg_with(determining={"r": 2})
    assert cli.main(["determine", "--config", write(tmp_path, bad_r), "--out", out]) == 2
    assert "(3, inf)" in capsys.readouterr().err
    blow = cfg_with(t_end=5.0, dt=0.05, initial={"rms": 1e6})
    assert cli.main(["simulate", "--config", write(tmp_path, blow), "--out", out]) == 3
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", out]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["simulate", "--config", write(tmp_path, cfg_with(t_end=0.05)), "--out", str(blocker)]) == 4


def test_cli_seed_override(tmp_path, capsys):
    path = write(tmp_path, cfg_with(t_end=0.05))
    cli.main(["simulate", "--config", path, "--out", str(tmp_path), "--seed", "3"])
    cli.main(["simulate", "--config", path, "--out", str(tmp_path), "--seed", "4"])
    hashes = [json.loads(x)["config_hash"] for x in capsys.readouterr().out.strip().splitlines()]
    assert hashes[0] != hashes[1]
