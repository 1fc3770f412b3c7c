import json
import os

import pytest

from bischro.cli import EXIT_BLOWUP, EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from bischro.config import ConfigError, parse_config


def write_ini(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


def test_energy_params_resolve(tmp_path):
    path = write_ini(tmp_path, "[run]\nscenario = simulate\nout = x\n[flow]\nenergy_params = 0,8,-1\n[solver]\ndt = 1e-6\n")
    cfg = parse_config(path)
    assert cfg.params.coeffs == (8.0, 0.0, 0.0, 12.0)


def test_flags_override_file(tmp_path):
    path = write_ini(tmp_path, "[run]\nscenario = verify\nseed = 3\nout = x\n")
    assert parse_config(path, {"seed": 9}).seed == 9
    assert parse_config(path, {"seed": None}).seed == 3


@pytest.mark.parametrize(
    "text, match",
    [
        ("[run]\nscenario = verify\nout = x\ncolour = red\n", "unknown key"),
        ("[extras]\nx = 1\n", "unknown section"),
        ("[run]\nscenario = simulate\nout = x\n[flow]\nparams = 0,1,0,0\n", "allow_a_zero"),
        ("[run]\nscenario = simulate\nout = x\n[flow]\nparams = 1,0,0,0\nenergy_params = 0,1,0\n", "contradict"),
        ("[run]\nscenario = simulate\nout = x\n[flow]\nparams = 1,0,0\n", "4"),
        ("[run]\nscenario = uniqueness\nout = x\n[flow]\nparams = 1,0,0,0\n[solver]\ndt = 1e-3\n", "stability"),
        ("[run]\nscenario = dispersion\nbackend = grassmann\nn = 3\nk = 1\nout = x\n[flow]\nparams = 1,0,0,0\n", "sphere"),
        ("[run]\nscenario = fly\nout = x\n", "scenario"),
        ("[run]\nscenario = uniqueness\nout = x\n[flow]\nparams = 1,0,0,0\n[experiment]\nmodes = 4,16\n", "N/4"),
    ],
)
def test_config_errors(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(write_ini(tmp_path, text))


def test_consistent_duplicate_params_accepted(tmp_path):
    path = write_ini(tmp_path, "[run]\nscenario = simulate\nout = x\n[flow]\nparams = 1,0,1,0\nenergy_params = 0,1,0\n")
    assert parse_config(path).params.hamiltonian


def test_verify_writes_reports(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--seed", "42", "--samples", "100", "--out", str(out)]) == EXIT_OK
    rows = json.loads((out / "identities.json").read_text())
    assert all(r["pass"] for r in rows)
    manifest = json.loads((out / "manifest.json").read_text())
    assert {a["file"] for a in manifest["artifacts"]} == {"config.json", "identities.json"}


def test_config_error_writes_nothing(tmp_path):
    out = tmp_path / "u"
    code = main(["uniqueness", "--params", "1,0,0,0", "--dt", "1e-3", "--out", str(out)])
    assert code == EXIT_CONFIG
    assert not out.exists()
    assert os.listdir(tmp_path) == []


def test_a_zero_rejected_then_allowed(tmp_path):
    args = ["simulate", "--params", "0,1,0,0", "--grid", "32", "--dt", "1e-4", "--t-end", "1e-3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_CONFIG
    assert main(args + ["--allow-a-zero", "--out", str(tmp_path / "b")]) == EXIT_OK


def test_nonempty_out_rejected(tmp_path):
    (tmp_path / "full").mkdir()
    (tmp_path / "full" / "x").write_text("keep")
    assert main(["verify", "--samples", "10", "--out", str(tmp_path / "full")]) == EXIT_CONFIG
    assert (tmp_path / "full" / "x").read_text() == "keep"


def test_simulate_is_byte_deterministic(tmp_path):
    args = ["simulate", "--energy-params", "0,1,0", "--grid", "32", "--dt", "5e-5", "--t-end", "1e-3", "--stride", "10"]
    for name in ("r1", "r2"):
        assert main(args + ["--out", str(tmp_path / name)]) == EXIT_OK
    files = sorted(os.listdir(tmp_path / "r1"))
    assert files == sorted(os.listdir(tmp_path / "r2"))
    for f in files:
        assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()


def test_dispersion_scenario(tmp_path):
    out = tmp_path / "d"
    args = ["dispersion", "--params", "1,0,0,0", "--mode", "1", "--theta0", "0.7853981633974483",
            "--t-end", "0.01", "--out", str(out)]
    assert main(args) == EXIT_OK
    res = json.loads((out / "dispersion.json").read_text())
    assert abs(res["omega_measured"] + 2**-1.5) < 1e-3 * 2**-1.5


def test_blowup_exit_code(tmp_path, monkeypatch):
    import bischro.flow as flow

    def boom(*args, **kw):
        raise flow.BlowUpError("synthetic")

    monkeypatch.setattr(flow, "step", boom)
    out = tmp_path / "s"
    args = ["simulate", "--params", "1,0,0,0", "--grid", "32", "--dt", "1e-5", "--t-end", "1e-4", "--out", str(out)]
    assert main(args) == EXIT_BLOWUP
    assert (out / "last_good.csv").exists()
    assert json.loads((out / "summary.json").read_text())["status"] == "blowup"


def test_failed_check_exit_code(tmp_path, monkeypatch):
    import bischro.cli as cli

    monkeypatch.setattr(cli, "suite_passed", lambda reports: False)
    assert main(["verify", "--samples", "10", "--out", str(tmp_path / "f")]) == EXIT_FAIL
    assert (tmp_path / "f" / "identities.json").exists()


def test_uniqueness_scenario_threads(tmp_path, monkeypatch):
    monkeypatch.setenv("BISCHRO_THREADS", "2")
    out = tmp_path / "q"
    args = ["uniqueness", "--params", "1,0,0,0", "--grid", "32", "--modes", "2,4", "--dt", "1e-5",
            "--t-end", "5e-4", "--stride", "5", "--out", str(out)]
    assert main(args) in (EXIT_OK, EXIT_FAIL)
    rep = json.loads((out / "loss_experiment.json").read_text())
    assert [r["m"] for r in rep["rows"]] == [2, 4]
    assert (out / "pair_m4.csv").exists()
