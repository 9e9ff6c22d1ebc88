import csv
import json
import shutil
import subprocess
import sys

import pytest

from hoclab.cli import main
from hoclab.config import parse_config
from hoclab.errors import ConfigurationError

SMALL = {
    "model": {"canonical": "F"},
    "grid": {"n_cells": 64},
    "run": {"equation": "nonlinear", "t_final": 2.0, "dt": 0.01, "initial": {"kind": "atom0"},
            "snapshot_times": [1.0]},
    "diagnostics": [{"kind": "distance", "norm": "tv", "target": "gamma"},
                    {"kind": "atom_mass", "eps": [0.001, 0.01]},
                    {"kind": "mean_fitness"}, {"kind": "lambda_hat"}, {"kind": "floor"}],
    "fits": [{"series": "tv_gamma"}],
    "output": {"snapshots": True},
}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_config_defaults():
    cfg = parse_config("{}")
    assert cfg.grid.n_cells == 512 and cfg.run.dt == 0.01 and cfg.run.equation == "nonlinear"
    assert cfg.output.directory == "hoclab_out"


@pytest.mark.parametrize("doc,path", [({"run": {"dt": 0}}, "run.dt"), ({"grid": {"n_cells": 2}}, "grid.n_cells"),
                                      ({"bogus": 1}, "bogus"), ({"run": {"equation": "heat"}}, "run.equation")])
def test_config_errors_name_the_field(doc, path):
    with pytest.raises(ConfigurationError, match=path.replace(".", r"\.")):
        parse_config(doc)


def test_config_rejects_bad_json_and_duplicates():
    with pytest.raises(ConfigurationError):
        parse_config("{not json")
    with pytest.raises(ConfigurationError, match="duplicate"):
        parse_config({"diagnostics": [{"kind": "mean_fitness"}, {"kind": "mean_fitness"}]})


def test_evolve_writes_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["evolve", "--config", _write(tmp_path, SMALL), "--out", str(out), "--quiet"]) == 0
    rows = _rows(out / "series.csv")
    assert rows[0] == ["t", "mass", "log_mass", "tv_gamma", "cesaro_atom_0.001", "cesaro_atom_0.01",
                       "mean_fitness", "lambda_hat", "floor_margin"]
    assert len(rows) == 1 + 21
    summary = json.loads((out / "summary.json").read_text())
    assert summary["spectral"]["regime"] == "fast"
    assert summary["fits"][0]["series"] == "tv_gamma"
    assert [e["eps"] for e in summary["extras"]["cesaro_atoms"]] == [0.001, 0.01]
    assert summary["snapshots"][0]["file"] == "snapshot_t1.csv"
    assert (out / "snapshot_t1.csv").exists()
    # the stored configuration parses back to the same run
    assert parse_config(summary["config"]) == parse_config(SMALL)


def test_evolve_is_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL)
    for d in ("a", "b"):
        assert main(["evolve", "--config", cfg, "--out", str(tmp_path / d), "--quiet"]) == 0
    for name in ("series.csv", "summary.json", "snapshot_t1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_hoc_out_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("HOC_OUT", str(tmp_path / "env"))
    assert main(["evolve", "--config", _write(tmp_path, SMALL), "--out", str(tmp_path / "flag"), "--quiet"]) == 0
    assert (tmp_path / "env" / "series.csv").exists()
    assert not (tmp_path / "flag").exists()


def test_dual_constant_series(tmp_path):
    doc = {"model": {"canonical": "F"}, "grid": {"n_cells": 64},
           "run": {"equation": "dual", "t_final": 1.0, "initial": {"kind": "constant", "value": 2.5}},
           "diagnostics": [{"kind": "entropy", "phi": "abs_p", "p": 2.0}]}
    out = tmp_path / "dual"
    assert main(["evolve", "--config", _write(tmp_path, doc), "--out", str(out), "--quiet"]) == 0
    rows = _rows(out / "series.csv")[1:]
    assert all(float(r[1]) == pytest.approx(2.5, abs=1e-12) for r in rows)
    assert all(abs(float(r[3])) < 1e-10 for r in rows)


def test_spectral_subcommand(tmp_path, capsys):
    cfg = _write(tmp_path, {"model": {"canonical": "C"}, "grid": {"n_cells": 128}})
    assert main(["spectral", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    printed = json.loads(capsys.readouterr().out.split("\nwrote")[0])
    assert printed["regime"] == "subcritical" and printed["alpha"] is None
    assert (tmp_path / "s" / "summary.json").exists()


def test_oracle_subcommand(tmp_path, capsys):
    assert main(["oracle", "--out", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "oracle.json").read_text())
    assert payload["tv_difference"] < 1e-6


def test_sweep_subcommand(tmp_path):
    assert main(["sweep", "--sizes", "64,128", "--out", str(tmp_path), "--quiet"]) == 0
    payload = json.loads((tmp_path / "sweep.json").read_text())
    orders = [r["order"] for r in payload["time"] if r["scheme"] == "etd4" and r["order"] is not None]
    assert orders and all(o > 3.5 for o in orders)
    assert main(["sweep", "--dts", "0.1,0.2,0.05", "--quiet"]) == 1


def test_exit_codes(tmp_path):
    assert main(["evolve", "--config", str(tmp_path / "missing.json"), "--quiet"]) == 1
    assert main(["evolve", "--config", _write(tmp_path, {"run": {"dt": -1}}), "--quiet"]) == 1
    # conservative flow has no h-transform in the subcritical regime
    bad = {"model": {"canonical": "C"}, "grid": {"n_cells": 32}, "run": {"equation": "conservative"}}
    assert main(["evolve", "--config", _write(tmp_path, bad), "--quiet"]) == 1
    # t_final not a multiple of dt
    odd = {"grid": {"n_cells": 32}, "run": {"t_final": 1.0, "dt": 0.3}}
    assert main(["evolve", "--config", _write(tmp_path, odd), "--quiet", "--out", str(tmp_path / "o")]) == 1
    # the linear flow overflows for the fast model over a long horizon
    boom = {"grid": {"n_cells": 32}, "run": {"equation": "linear", "t_final": 1500.0, "dt": 0.05,
                                             "sample_stride": 1000}}
    assert main(["evolve", "--config", _write(tmp_path, boom), "--quiet", "--out", str(tmp_path / "b")]) == 2


def test_check_single_criterion(tmp_path, capsys):
    assert main(["check", "--only", "1", "--out", str(tmp_path)]) == 0
    assert "1/1 criteria passed" in capsys.readouterr().out
    assert json.loads((tmp_path / "acceptance.json").read_text())["passed"] == 1


@pytest.mark.skipif(shutil.which("hoclab") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["hoclab", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "hoclab" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "hoclab.cli", "spectral", "--quiet"], capture_output=True,
                          text=True, cwd=tmp_path)
    assert proc.returncode == 0
