import json
from pathlib import Path

import numpy as np
import pytest

from dynblockade import cli
from dynblockade import experiments as ex
from dynblockade.config import ConfigError, dump_defaults, dumps, loads, presets
from dynblockade.observables import find_window_min

SHORT_TRACE = """[time-trace]
name = short
E = 2
alpha = 0.05
P0 = 0.2
P1 = 1
T = 2.5
dim = 16
warmup_periods = 1
sample_dt = 0.05
"""

SMALL_MAP = """[colormap]
name = smallmap
E = 0.25
alpha = 1
P0 = 0.5
P1 = 0.2
T = 12.3
dim = 12
method = propagator
alpha_grid = 0.5, 1.0
P0_grid = log 0.2 0.6 2
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.mark.parametrize("name", list(presets()))
def test_dump_defaults_round_trip(name):
    scenario, grids = presets()[name]
    loaded = loads(dump_defaults(name))
    assert loaded.scenario == scenario
    for key, grid in grids.items():
        assert np.array_equal(loaded.grids[key], grid)


def test_complex_drive_round_trip():
    sc = ex.FIG1.with_(P0=0.2 - 0.1j)
    assert loads(dumps(sc)).scenario == sc


def test_missing_key_is_line_anchored():
    text = SHORT_TRACE.replace("T = 2.5\n", "")
    with pytest.raises(ConfigError) as info:
        loads(text)
    assert "'T'" in str(info.value) and info.value.line == 1


def test_bad_value_points_at_its_line():
    with pytest.raises(ConfigError) as info:
        loads(SHORT_TRACE.replace("alpha = 0.05", "alpha = lots"))
    assert info.value.line == 4


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        loads(SHORT_TRACE + "colour = red\n")


def test_evolve_writes_table_and_manifest(tmp_path, capsys):
    cfg = _write(tmp_path, SHORT_TRACE)
    out = tmp_path / "out"
    assert cli.main(["evolve", cfg, "-o", str(out)]) == 0
    header, cols, data = cli.read_table(out / "short.csv")
    assert cols == ["t", "n", "re_psi", "im_psi", "g2", "f", "drive", "pulse"]
    assert data.shape[0] == round(5.0 / 0.05) + 1
    assert len(header["config_sha256"]) == 64
    manifest = json.loads((out / "short.manifest.json").read_text())
    assert manifest["files"] == ["short.csv"]
    assert manifest["config_sha256"] == header["config_sha256"]


def test_evolve_is_byte_deterministic(tmp_path):
    cfg = _write(tmp_path, SHORT_TRACE)
    cli.main(["evolve", cfg, "-o", str(tmp_path / "a")])
    cli.main(["evolve", cfg, "-o", str(tmp_path / "b")])
    assert (tmp_path / "a" / "short.csv").read_bytes() == (tmp_path / "b" / "short.csv").read_bytes()


def test_dim_override_changes_hash(tmp_path):
    cfg = _write(tmp_path, SHORT_TRACE)
    cli.main(["evolve", cfg, "-o", str(tmp_path / "a")])
    cli.main(["--dim", "14", "evolve", cfg, "-o", str(tmp_path / "b")])
    ha = cli.read_table(tmp_path / "a" / "short.csv")[0]["config_sha256"]
    hb = cli.read_table(tmp_path / "b" / "short.csv")[0]["config_sha256"]
    assert ha != hb
    assert json.loads((tmp_path / "b" / "short.manifest.json").read_text())["dim"] == 14


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, SHORT_TRACE.replace("T = 2.5\n", ""))
    assert cli.main(["evolve", cfg, "-o", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("ERROR") and "'T'" in err and ":1:" in err
    assert cli.main(["evolve", str(tmp_path / "nope.ini"), "-o", str(tmp_path / "o")]) == 2


def test_unwritable_output_exit_4(tmp_path):
    cfg = _write(tmp_path, SHORT_TRACE)
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["evolve", cfg, "-o", str(blocker / "sub")]) == 4


def test_sweep_long_format(tmp_path):
    cfg = _write(tmp_path, SMALL_MAP)
    out = tmp_path / "out"
    assert cli.main(["--jobs", "1", "sweep", cfg, "-o", str(out)]) == 0
    _, cols, data = cli.read_table(out / "smallmap.csv")
    assert data.shape == (4, len(cols))
    assert cols[:2] == ["alpha", "P0"] and cols[-1] == "converged"
    manifest = json.loads((out / "smallmap.manifest.json").read_text())
    assert manifest["files"] == ["smallmap.csv", "smallmap.regrid.csv"]


def test_single_point_sweep_matches_evolve(tmp_path):
    text = SMALL_MAP.replace("alpha_grid = 0.5, 1.0", "alpha_grid = 1.0").replace("P0_grid = log 0.2 0.6 2", "P0_grid = 0.5")
    cli.main(["--jobs", "1", "sweep", _write(tmp_path, text), "-o", str(tmp_path / "s")])
    _, cols, data = cli.read_table(tmp_path / "s" / "smallmap.csv")
    row = dict(zip(cols, data[0]))
    trace = text.replace("[colormap]", "[time-trace]").replace("alpha_grid = 1.0\n", "").replace("P0_grid = 0.5\n", "")
    cli.main(["evolve", _write(tmp_path, trace, "t.ini"), "-o", str(tmp_path / "e")])
    extra = json.loads((tmp_path / "e" / "smallmap.manifest.json").read_text())["extra"]
    assert (row["t_s"], row["g2_ts"], row["n_ts"]) == (extra["t_s"], extra["g2_ts"], extra["n_ts"])


def test_empty_grid_exit_2(tmp_path):
    cfg = _write(tmp_path, SMALL_MAP.replace("P0_grid = log 0.2 0.6 2", "P0_grid = "))
    assert cli.main(["sweep", cfg, "-o", str(tmp_path / "o")]) == 2


def test_two_time_and_steady(tmp_path):
    text = SHORT_TRACE.replace("[time-trace]", "[two-time]").replace("name = short", "name = tt")
    out = tmp_path / "out"
    assert cli.main(["two-time", _write(tmp_path, text), "-o", str(out)]) == 0
    _, cols, data = cli.read_table(out / "tt.csv")
    assert cols == ["t", "tau", "g2", "g2_conventional"]
    assert np.all(np.isfinite(data))
    assert cli.main(["steady", _write(tmp_path, SHORT_TRACE, "s.ini"), "-o", str(out)]) == 0
    manifest = json.loads((out / "short.manifest.json").read_text())
    assert manifest["checks"]["methods_agree"]


def test_check_single_named_check(tmp_path, capsys):
    assert cli.main(["check", "--only", "rate-law", "-o", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "check.json").read_text())
    assert list(report["checks"]) == ["rate-law"]


def test_check_failure_names_the_check(tmp_path, capsys, monkeypatch):
    monkeypatch.setitem(cli.CHECKS, "cycle", lambda rtol, atol: (False, {"why": "forced"}))
    assert cli.main(["check", "--only", "cycle", "-o", str(tmp_path)]) == 1
    assert "ERROR check failed: cycle" in capsys.readouterr().err


def test_plot_scripts(tmp_path):
    assert cli.main(["plot-scripts", "-o", str(tmp_path / "missing")]) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["plot-scripts", "-o", str(empty)]) == 2

    out = tmp_path / "out"
    cli.main(["evolve", _write(tmp_path, SHORT_TRACE), "-o", str(out)])
    cli.main(["--jobs", "1", "sweep", _write(tmp_path, SMALL_MAP, "m.ini"), "-o", str(out)])
    assert cli.main(["plot-scripts", "-o", str(out)]) == 0
    assert "short.csv" in (out / "traces.gp").read_text()
    heat = (out / "smallmap.gp").read_text()
    assert "logscale" in heat and "smallmap.regrid.csv" in heat
    first = heat
    cli.main(["plot-scripts", "-o", str(out)])
    assert (out / "smallmap.gp").read_text() == first

    (out / "short.csv").unlink()
    assert cli.main(["plot-scripts", "-o", str(out)]) == 2


def test_dump_defaults_flag(capsys):
    assert cli.main(["--dump-defaults", "fig3"]) == 0
    text = capsys.readouterr().out
    assert loads(text).scenario == presets()["fig3"][0]
    assert cli.main(["--dump-defaults", "nonsense"]) == 2
