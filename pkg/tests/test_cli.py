import filecmp
import math
import os

import pytest

from kslab.cli import main
from kslab.runner import (FRONT_SCHEMA, SCHEMA, ConfigError, parse_config, run_scenario, write_csv)

MODEL = """
[model]
chi = 0.3
a = 1
b = 1
lam = 1
mu = 1
"""

SMALL = MODEL + """
[grid]
half_length = 60
h = 0.2
[solver]
t_end = 10
dt = 0.05
observer_stride = 5
[analysis]
window_start = 5
speed_tol = 0.5
[output]
snapshot_stride = 5
node_stride = 5
"""


def write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_minimal_config_fills_defaults():
    cfg = parse_config(MODEL, kind="kernel-selftest")
    assert cfg.kind == "kernel-selftest"
    for sec, keys in SCHEMA.items():
        if sec == "sweep":
            continue
        assert set(cfg.sections[sec]) == set(keys)
    assert cfg.get("analysis", "theta") == 0.5
    assert cfg.get("solver", "tail") == "zero"
    assert cfg.get("initial", "level") == 1.0


def test_kind_from_document():
    cfg = parse_config("[scenario]\nkind = wave\n" + MODEL)
    assert cfg.kind == "wave"
    with pytest.raises(ConfigError, match="kind"):
        parse_config("[scenario]\nkind = nonsense\n" + MODEL)
    with pytest.raises(ConfigError, match="missing required key \\[scenario\\] kind"):
        parse_config(MODEL)


def test_global_existence_rejection():
    text = MODEL.replace("chi = 0.3", "chi = 1")
    for kind in ("simulate", "speed", "wave"):
        with pytest.raises(ConfigError, match="chi\\*mu < b required"):
            parse_config(text, kind=kind)
    parse_config(text, kind="kernel-selftest")      # kernel checks need no existence theory


def test_exponential_kappa_rejection():
    text = MODEL + "[initial]\nkind = exponential\nkappa = 1.2\n"
    with pytest.raises(ConfigError, match="kappa < sqrt\\(a\\)"):
        parse_config(text, kind="speed")


def test_wave_kappa_rejection():
    with pytest.raises(ConfigError, match="min\\(sqrt\\(a\\), sqrt\\(lam\\)\\)"):
        parse_config(MODEL + "[analysis]\nkappa = 1.0\n", kind="wave")


def test_strict_unknown_keys():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(MODEL + "[grid]\nspacing = 0.1\n", kind="simulate")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MODEL + "[plots]\nx = 1\n", kind="simulate")
    parse_config(MODEL + "[grid]\nspacing = 0.1\n", kind="simulate", strict=False)


def test_missing_and_malformed():
    with pytest.raises(ConfigError, match="\\[model\\] mu"):
        parse_config(MODEL.replace("mu = 1", ""), kind="simulate")
    with pytest.raises(ConfigError, match="\\[grid\\] h"):
        parse_config(MODEL + "[grid]\nh = fine\n", kind="simulate")
    with pytest.raises(ConfigError, match="\\[model\\]"):
        parse_config(MODEL.replace("lam = 1", "lam = -1"), kind="simulate")


def test_domain_policy():
    text = MODEL + "[grid]\nhalf_length = 50\n[solver]\nt_end = 60\n"
    with pytest.raises(ConfigError, match="half_length >="):
        parse_config(text, kind="speed")


def test_echo_round_trips():
    cfg = parse_config(SMALL, kind="speed")
    again = parse_config(cfg.echo(), kind="speed")
    assert again.sections == cfg.sections


def test_write_csv_format(tmp_path):
    path = tmp_path / "f.csv"
    write_csv([(0.1, 1.0, -2.0, 1 / 3)], FRONT_SCHEMA, path)
    raw = path.read_bytes()
    assert raw == b"t,left_pos,right_pos,theta\n0.10000000000000001,1,-2,0.33333333333333331\n"
    assert float(raw.split(b",")[-1]) == 1 / 3
    with pytest.raises(ValueError, match="row 0"):
        write_csv([(1.0, 2.0)], FRONT_SCHEMA, tmp_path / "g.csv")
    with pytest.raises(OSError, match="cannot write"):
        write_csv([], FRONT_SCHEMA, tmp_path / "missing" / "h.csv")


def test_kernel_selftest_report(tmp_path):
    cfg = parse_config(MODEL + "[analysis]\nselftest_fields = 5\n", kind="kernel-selftest")
    rep = run_scenario(cfg, str(tmp_path))
    assert rep.passed
    names = [m.name for m in rep.measurements]
    assert names == ["fast_vs_direct_gap", "gradient_law_excess", "residual_halving_ratio"]
    text = (tmp_path / "report.txt").read_text()
    assert "result: PASS" in text and "[model]" in text


def test_speed_report_and_files(tmp_path):
    rep = run_scenario(parse_config(SMALL, kind="speed"), str(tmp_path))
    assert rep.passed
    c = next(m for m in rep.measurements if m.name == "c_hat")
    assert c.target == 2.0 and c.tolerance == 0.5 and "t in [5, 10]" in c.window
    assert rep.constants["c0_star"] == 2.0
    head = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert head == "t,x,u,v,v_x"
    assert (tmp_path / "fronts.csv").read_text().startswith("t,left_pos,right_pos,theta\n")


def test_determinism(tmp_path):
    cfg = parse_config(SMALL, kind="speed")
    run_scenario(cfg, str(tmp_path / "a"))
    run_scenario(cfg, str(tmp_path / "b"))
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert sorted(cmp.common) == ["fronts.csv", "report.txt", "trajectory.csv"]
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", cmp.common, shallow=False)
    assert not mismatch and not errors


def test_sweep_parallel_matches_serial(tmp_path):
    text = SMALL + "[sweep]\nparameter = chi\nvalues = 0, 0.2\nbase = speed\n"
    cfg = parse_config(text, kind="sweep")
    serial = run_scenario(cfg, str(tmp_path / "s"), jobs=1)
    par = run_scenario(cfg, str(tmp_path / "p"), jobs=2)
    assert len(serial.children) == 2 and serial.passed and par.passed
    a = (tmp_path / "s" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "p" / "sweep.csv").read_bytes()
    assert a.startswith(b"chi,passed,")
    assert (tmp_path / "s" / "point_001" / "report.txt").exists()


def test_sweep_point_invalid(tmp_path):
    text = SMALL + "[sweep]\nparameter = chi\nvalues = 0, 1.5\nbase = speed\n"
    cfg = parse_config(text, kind="sweep")
    with pytest.raises(ConfigError, match="chi\\*mu < b"):
        run_scenario(cfg, str(tmp_path))


def test_wave_refine(tmp_path):
    cfg = parse_config(MODEL + "[analysis]\nwave_h = 0.1\n", kind="wave")
    rep = run_scenario(cfg, str(tmp_path), refine=True)
    coarse, fine = rep.refinement["residual"]
    assert 3.0 < coarse / fine < 5.0
    assert (tmp_path / "wave.csv").read_text().startswith("x,U,V,V_x,envelope_lo,envelope_hi\n")


def test_wave_scan_speed(tmp_path):
    cfg = parse_config(MODEL + "[analysis]\nwave_speed = 1.9\n", kind="wave")
    rep = run_scenario(cfg, None)
    assert rep.passed and any("excluded" in n for n in rep.notes)


def test_cli_exit_codes(tmp_path, capsys):
    ok = write(tmp_path, MODEL + "[analysis]\nselftest_fields = 3\n")
    assert main(["kernel-selftest", "--config", ok]) == 0
    bad = write(tmp_path, MODEL.replace("chi = 0.3", "chi = 1"), "bad.ini")
    assert main(["speed", "--config", bad]) == 2
    assert "chi*mu < b required" in capsys.readouterr().err
    assert main(["speed", "--config", str(tmp_path / "nope.ini")]) == 2
    wrong = write(tmp_path, SMALL.replace("speed_tol = 0.5", "speed_tol = 0.001"), "wrong.ini")
    assert main(["speed", "--config", wrong, "--out", str(tmp_path / "o")]) == 1
    assert "FAIL c_hat" in capsys.readouterr().out
