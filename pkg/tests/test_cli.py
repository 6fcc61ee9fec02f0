import json

import numpy as np
import pytest

from nvrfof import cli
from nvrfof.fitting import FitResult, SweepResult
from nvrfof.spectrum import CSV_HEADER, read_spectrum


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(autouse=True)
def no_config_dir(monkeypatch):
    monkeypatch.delenv(cli.CONFIG_DIR_ENV, raising=False)


def test_no_command(capsys):
    code, _, err = run(capsys)
    assert code == 2
    assert "command is required" in err


@pytest.mark.parametrize(
    "argv,fragment",
    [
        (["bogus"], "invalid choice"),
        (["simulate", "--no-such-flag"], "unrecognized"),
        (["simulate", "--points", "1"], "grid requires"),
        (["simulate", "--points", "many"], "points"),
        (["simulate", "--f-start-mhz", "3000", "--f-stop-mhz", "2000"], "f_start"),
        (["simulate", "--noise-sigma", "-1"], "noise_sigma"),
        (["simulate", "--direction", "sideways"], "direction"),
        (["simulate", "--preset", "nope"], "invalid choice"),
        (["link", "--p-opt-pd-mw", "47"], "p_rf_ant"),
        (["sweep-field", "--range", "36:8", "--out", "x"], "range"),
        (["sweep-field", "--fields-gauss", "8"], "fields_gauss"),
        (["fit"], "input"),
    ],
)
def test_usage_and_input_errors_exit_2(capsys, argv, fragment):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert fragment in err
    assert out == ""


def test_internal_error_exit_1(capsys, monkeypatch):
    def boom(args):
        raise ZeroDivisionError("oops")

    monkeypatch.setitem(cli.COMMANDS, "link", boom)
    code, _, err = run(capsys, "link")
    assert code == 1
    assert "internal error" in err


# --- simulate / fit ----------------------------------------------------------------


def test_simulate_stdout_and_determinism(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--seed", "5")
    assert code == 0
    assert CSV_HEADER in out.splitlines()
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "simulate", "--seed", "5", "--out", str(a))
    run(capsys, "simulate", "--seed", "5", "--out", str(b))
    assert a.read_bytes() == b.read_bytes() == out.encode()
    run(capsys, "simulate", "--seed", "6", "--out", str(b))
    assert a.read_bytes() != b.read_bytes()


def test_simulate_aligned_dips(capsys, tmp_path):
    path = tmp_path / "s.csv"
    code, _, _ = run(
        capsys, "simulate", "--field-gauss", "11.2", "--direction", "111", "--noise-sigma", "0",
        "--p-rf-dbm", "0", "--f-start-mhz", "2800", "--f-stop-mhz", "2940", "--points", "1401", "--out", str(path),
    )
    assert code == 0
    code, out, _ = run(capsys, "fit", str(path), "--n-lines", "4")
    assert code == 0
    centers = [ln["center_mhz"] for ln in json.loads(out)["lines"]]
    assert centers[0] == pytest.approx(2838.64, abs=1e-6)
    assert centers[-1] == pytest.approx(2901.36, abs=1e-6)


def test_simulate_metadata_records_inputs(tmp_path, capsys):
    path = tmp_path / "s.csv"
    run(capsys, "simulate", "--seed", "9", "--b-vector", "1,2,3", "--out", str(path))
    meta = read_spectrum(path).meta
    assert (meta["bx_gauss"], meta["by_gauss"], meta["bz_gauss"], meta["seed"]) == (1.0, 2.0, 3.0, 9)


def test_fit_round_trip(capsys, tmp_path):
    spec, fit = tmp_path / "s.csv", tmp_path / "f.json"
    run(capsys, "simulate", "--seed", "1", "--out", str(spec))
    code, _, _ = run(capsys, "fit", str(spec), "--n-lines", "2", "--out", str(fit))
    assert code == 0
    result = FitResult.from_dict(json.loads(fit.read_text()))
    assert len(result.lines) == 2 and result.converged
    assert json.dumps(result.to_dict(), indent=2) + "\n" == fit.read_text()


@pytest.mark.parametrize(
    "text,fragment",
    [("", "empty file"), (CSV_HEADER + "\n", "no data rows"), (CSV_HEADER + "\n1,1\n2,x\n", "line 3")],
)
def test_fit_bad_files(capsys, tmp_path, text, fragment):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    code, _, err = run(capsys, "fit", str(path))
    assert code == 2
    assert fragment in err


def test_fit_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "fit", str(tmp_path / "nope.csv"))
    assert code == 2
    assert "not found" in err


def test_fit_flat_spectrum(capsys, tmp_path):
    path = tmp_path / "flat.csv"
    path.write_text(CSV_HEADER + "\n" + "".join(f"{2800 + i},1.0\n" for i in range(50)))
    code, _, err = run(capsys, "fit", str(path))
    assert code == 2
    assert "no resonances" in err


# --- link -------------------------------------------------------------------------


def test_link_endpoint(capsys):
    code, out, _ = run(capsys, "link", "--p-opt-pd-mw", "47", "--p-rf-ant-dbm", "-0.7")
    doc = json.loads(out)
    assert code == 0
    assert doc["mode"] == "endpoint"
    assert doc["efficiency"] == pytest.approx(0.0181, abs=1e-4)
    assert doc["modulation_index"] is None


def test_link_forward(capsys):
    code, out, _ = run(capsys, "link")
    doc = json.loads(out)
    assert code == 0 and doc["mode"] == "forward"
    assert doc["p_rf_ant_dbm"] == pytest.approx(2.48, abs=0.005)
    assert doc["p_opt_pd_mw"] == pytest.approx(47.0)


def test_link_zero_drive_is_minus_inf(capsys, tmp_path):
    path = tmp_path / "l.json"
    code, _, _ = run(capsys, "link", "--v-rf", "0", "--out", str(path))
    assert code == 0
    assert json.loads(path.read_text())["p_rf_ant_dbm"] == "-inf"


# --- configuration ----------------------------------------------------------------


def test_config_file_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"p_opt_pd_mw": 47, "p_rf_ant_dbm": 0.0}))
    _, out, _ = run(capsys, "link", "--config", str(cfg))
    assert json.loads(out)["efficiency"] == pytest.approx(1 / 47)
    _, out, _ = run(capsys, "link", "--config", str(cfg), "--p-rf-ant-dbm", "-0.7")
    assert json.loads(out)["efficiency"] == pytest.approx(0.0181, abs=1e-4)


def test_config_dir_env(capsys, tmp_path, monkeypatch):
    (tmp_path / "link.json").write_text(json.dumps({"p_opt_pd_mw": 47, "p_rf_ant_dbm": -0.7}))
    (tmp_path / "other.json").write_text(json.dumps({"p_opt_pd_mw": 10, "p_rf_ant_dbm": 0}))
    monkeypatch.setenv(cli.CONFIG_DIR_ENV, str(tmp_path))
    _, out, _ = run(capsys, "link")
    assert json.loads(out)["efficiency"] == pytest.approx(0.0181, abs=1e-4)
    _, out, _ = run(capsys, "link", "--config", "other.json")
    assert json.loads(out)["efficiency"] == pytest.approx(0.1)


@pytest.mark.parametrize(
    "content,fragment",
    [('{"bogus": 1}', "bogus"), ("[1, 2]", "JSON object"), ("{oops", "invalid JSON"), ('{"points": 1.5}', "points")],
)
def test_bad_config(capsys, tmp_path, content, fragment):
    cfg = tmp_path / "c.json"
    cfg.write_text(content)
    code, _, err = run(capsys, "simulate", "--config", str(cfg))
    assert code == 2
    assert fragment in err


def test_missing_config(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--config", str(tmp_path / "none.json"))
    assert code == 2 and "not found" in err


# --- sweeps -----------------------------------------------------------------------


def test_sweep_field_defaults(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep-field", "--out", str(tmp_path))
    assert code == 0
    sweep = SweepResult.from_dict(json.loads(out))
    assert sweep.slope == pytest.approx(5.6, rel=1e-6)
    assert sweep.control == [8.0, 12.0, 16.0, 20.0, 24.0, 28.0, 32.0, 36.0]
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == sorted([f"spectrum_{k:03d}.csv" for k in range(8)] + [f"fit_{k:03d}.json" for k in range(8)] + ["sweep.json"])
    assert json.loads((tmp_path / "sweep.json").read_text()) == json.loads(out)


def test_sweep_field_range(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep-field", "--range", "8:20", "--step", "6", "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["control"] == [8.0, 14.0, 20.0]


def test_sweep_power_defaults(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep-power", "--out", str(tmp_path))
    doc = json.loads(out)
    assert code == 0
    assert doc["contrast_nondecreasing"] and doc["fwhm_nondecreasing"]
    assert doc["contrast"][-1] > 0.10


def test_sweep_needs_out(capsys):
    code, _, err = run(capsys, "sweep-power")
    assert code == 2 and "--out" in err


def test_sweep_outputs_reparse(capsys, tmp_path):
    run(capsys, "sweep-power", "--noise-sigma", "0.001", "--seed", "4", "--out", str(tmp_path))
    for k in range(6):
        spec = read_spectrum(tmp_path / f"spectrum_{k:03d}.csv")
        assert spec.meta["seed"] == 4 + k
        assert np.all(np.isfinite(spec.pl_normalized))
        FitResult.from_dict(json.loads((tmp_path / f"fit_{k:03d}.json").read_text()))
