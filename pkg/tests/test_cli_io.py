import csv
import hashlib
import json
import os

import pytest

from fastkpp.cli_io import (
    EXIT_AUDIT, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, ConfigError, SWEEP_HEADER,
    main, parse_config, run_experiment, sweep,
)

BASE = """
[params]
m = 0.5
p = 2
N = 1
"""


def write(tmp_path, text, name="lab.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- parsing

def test_defaults_filled():
    cfg = parse_config(BASE)
    assert cfg["solver"]["cfl"] == 0.4 and cfg["solver"]["snapshots"] == 51
    assert cfg["run"]["seed"] == 0 and cfg["grid"]["mode"] == "auto"
    assert cfg.get("solver.t_end") == 25.0
    assert cfg.get("solver.t_end", "outer_decay") == 8.0
    assert cfg.get("experiment.omegas", "band_sigma_star") == (0.1, 0.5, 0.9)


def test_round_trip_lossless():
    cfg = parse_config(BASE + "\n[solver]\neps_reg = 0.1\n[experiment]\nomegas = 0.1, 0.3\n")
    again = parse_config(cfg.to_text())
    assert again == cfg and again.to_text() == cfg.to_text()


def test_unknown_key_has_line_number():
    with pytest.raises(ConfigError) as e:
        parse_config(BASE + "[solver]\ncflx = 0.3\n")
    assert e.value.errors[0][0] == 7 and "solver.cflx" in str(e.value)


def test_type_and_required_errors():
    with pytest.raises(ConfigError) as e:
        parse_config("[params]\nm = half\np = 2\n")
    msgs = str(e.value)
    assert "params.m" in msgs and "params.N is required" in msgs


def test_negative_m_names_field():
    with pytest.raises(ConfigError) as e:
        parse_config(BASE.replace("m = 0.5", "m = -1"))
    assert "params.m" in str(e.value) and e.value.errors[0][0] == 3


def test_regime_incompatibility():
    text = BASE.replace("m = 0.5", "m = 1") + "[experiment]\npreset = band_sigma_star\n"
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert "band_sigma_star" in str(e.value) and "FastGood" in str(e.value)


# ---------------------------------------------------------------- exit codes

def test_exit_config_error(tmp_path):
    assert main(["evaluate", "--config", write(tmp_path, "[params]\nm = x\n")]) == EXIT_CONFIG
    assert main(["evaluate", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
    slow = write(tmp_path, BASE.replace("m = 0.5", "m = 1"), "slow.ini")
    assert main(["preset", "band_sigma_star", "--config", slow,
                 "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_exit_ok_evaluate(tmp_path):
    out = tmp_path / "ev"
    code = main(["evaluate", "--config", write(tmp_path, BASE), "--out", str(out)])
    assert code == EXIT_OK
    rows = read_csv(out / "field.csv")
    assert len(rows) == 201 and float(rows[0]["value"]) > 0


def test_exit_numeric(tmp_path):
    text = BASE + "[solver]\nmax_steps = 1\nt_end = 1.0\n[grid]\ncells = 64\n"
    out = tmp_path / "num"
    assert main(["simulate", "--config", write(tmp_path, text), "--out", str(out)]) == EXIT_NUMERIC
    err = json.loads((out / "error.json").read_text())
    assert err["type"] == "StiffnessError"


def test_exit_audit_outer_decay(tmp_path):
    # the bound holds, the short-window slope target does not
    out = tmp_path / "od"
    code = main(["preset", "outer_decay", "--config", write(tmp_path, BASE),
                 "--out", str(out)])
    rep = json.loads((out / "outer_decay.json").read_text())
    assert code == EXIT_AUDIT
    assert rep["bound_holds"] and not rep["slope_ok"]


# ---------------------------------------------------------------- artifacts

SMALL = BASE + "[solver]\nt_end = 2.0\nsnapshots = 11\n[grid]\ncells = 128\n"


def test_determinism_and_manifest(tmp_path):
    cfg = parse_config(SMALL)
    c1, m1 = run_experiment(cfg, str(tmp_path / "a"), "fronts")
    c2, m2 = run_experiment(cfg, str(tmp_path / "b"), "fronts")
    assert c1 == c2 == EXIT_OK
    assert m1["files"] == m2["files"] and len(m1["files"]) >= 7
    for name, digest in m1["files"].items():
        data = (tmp_path / "a" / name).read_bytes()
        assert hashlib.sha256(data).hexdigest() == digest
        assert data == (tmp_path / "b" / name).read_bytes()
    listed = set(m1["files"])
    on_disk = {os.path.relpath(os.path.join(d, f), tmp_path / "a")
               for d, _, fs in os.walk(tmp_path / "a") for f in fs}
    assert on_disk - listed == {"manifest.json"}


def test_csv_seventeen_digits(tmp_path):
    run_experiment(parse_config(SMALL), str(tmp_path), "simulate")
    snaps = sorted((tmp_path / "snapshots").iterdir())
    for row in read_csv(snaps[-1])[:20]:
        for text in row.values():
            assert text == "%.17g" % float(text)


def test_seed_flag_recorded(tmp_path):
    path = write(tmp_path, SMALL)
    main(["simulate", "--config", path, "--out", str(tmp_path / "s1"), "--seed", "7"])
    man = json.loads((tmp_path / "s1" / "manifest.json").read_text())
    assert man["seed"] == 7 and "seed = 7" in man["config"]


# ---------------------------------------------------------------- presets

def test_slow_control_report(tmp_path):
    # default t_end; the 2t - 1.5 ln t transient costs about 4% at t = 25
    text = BASE.replace("m = 0.5", "m = 1")
    code, man = run_experiment(parse_config(text), str(tmp_path), "slow_control")
    rep = json.loads((tmp_path / "slow_control.json").read_text())
    assert code == EXIT_OK and "slope" in rep["fit"]
    assert abs(rep["ratio"] - 1) <= 0.1


def test_band_report(tmp_path):
    text = BASE + "[solver]\nt_end = 12\n"
    run_experiment(parse_config(text), str(tmp_path), "band_sigma_star")
    rep = json.loads((tmp_path / "band.json").read_text())
    assert set(rep["bands"]) == {"0.1", "0.5", "0.9"}
    assert all(b["Cband"] >= 1 for b in rep["bands"].values())


# ---------------------------------------------------------------- sweep

def test_single_cell_sweep_matches_run(tmp_path):
    text = SMALL + "[experiment]\nomegas = 0.5\n[sweep]\npreset = band_sigma_star\n"
    cfg = parse_config(text)
    rows = sweep(cfg, text, str(tmp_path / "sw"))
    assert len(rows) == 1
    code, _ = run_experiment(cfg.with_overrides(**{"experiment.preset": "band_sigma_star"}),
                             str(tmp_path / "one"))
    a = json.loads((tmp_path / "one" / "band.json").read_text())["bands"]["0.5"]
    assert rows[0]["ratio"] == a["ratio"] and rows[0]["Cband"] == a["Cband"]
    table = read_csv(tmp_path / "sw" / "sweep.csv")
    assert list(table[0]) == SWEEP_HEADER


def test_sweep_quarantines_slow_cells(tmp_path):
    text = SMALL + "[sweep]\nm = 0.5, 1.0\n"
    rows = sweep(parse_config(text), text, str(tmp_path))
    assert len(rows) == 2
    assert rows[0]["error"] == ""
    assert not rows[1]["pass"] and "FastGood" in rows[1]["error"]


def test_sweep_three_by_three(tmp_path):
    text = BASE + ("[run]\nworkers = 3\n[solver]\nt_end = 50\n"
                   "[experiment]\nomegas = 0.5\n"
                   "[sweep]\nm = 0.4, 0.5, 0.6\np = 1.8, 2.0, 2.2\n")
    rows = sweep(parse_config(text), text, str(tmp_path))
    assert len(rows) == 9
    for r in rows:
        assert r["error"] == "" and 0.9 <= r["ratio"] <= 1.1, r
