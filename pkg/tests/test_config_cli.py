import csv
import json
import math
import pathlib
import subprocess
import sys

import numpy as np
import pytest

from cascade_qwm import calibration, spectrum
from cascade_qwm import config as cfgmod
from cascade_qwm.cli import main
from cascade_qwm.errors import ParameterError

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"


def run(tmp_path, command, config=None, *extra, name="out"):
    out = tmp_path / name
    argv = [command, "--out", str(out)]
    if config is not None:
        argv += ["--config", str(config)]
    return main(argv + list(extra)), out


def write_yaml(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- config ---------------------------------------------------------------------

def test_grid_expansion():
    assert cfgmod.expand_grid([3, 1]) == [3.0, 1.0]
    assert cfgmod.expand_grid(2) == [2.0]
    assert cfgmod.expand_grid({"start": 0, "stop": 1, "num": 3}) == [0.0, 0.5, 1.0]
    lg = cfgmod.expand_grid({"start": 1, "stop": 100, "num": 3, "scale": "log"})
    assert lg == pytest.approx([1.0, 10.0, 100.0])
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.expand_grid({"start": 0, "stop": 1})


def test_unknown_and_mistyped_keys():
    with pytest.raises(cfgmod.ConfigError, match="gamma_mhz"):
        cfgmod.RunConfig.from_dict({"system": {"gamma_mhz": 1.0}})
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.RunConfig.from_dict({"sytem": {}})
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.RunConfig.from_dict({"system": {"alpha": "high"}})
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.RunConfig.from_dict({"extraction": {"engine": "euler"}})
    assert issubclass(cfgmod.ConfigError, ParameterError)


def test_resolved_config_round_trip(tmp_path):
    cfg = cfgmod.RunConfig.load(CONFIGS / "operating_point.yaml")
    again = cfgmod.RunConfig.from_dict(json.loads(cfg.dumps()))
    assert again.dumps() == cfg.dumps()
    p = cfg.cascade_params()
    assert p.alpha == 0.79 and p.Gamma == pytest.approx(2 * math.pi * 1.8e6)


def test_bundled_configs_validate():
    for path in sorted(CONFIGS.glob("*.yaml")):
        cfgmod.RunConfig.load(path)


# --- CLI ------------------------------------------------------------------------

def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = write_yaml(tmp_path, "system:\n  gamma_MHz: 1.0\n  bogus: 2\n")
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ConfigError" and "bogus" in err["message"]


def test_bad_jobs_exits_2(tmp_path):
    code, _ = run(tmp_path, "simulate", None, "--jobs", "0")
    assert code == 2


def test_simulate_outputs(tmp_path):
    code, out = run(tmp_path, "simulate", CONFIGS / "operating_point.yaml", "--svg")
    assert code == 0
    rows = read_csv(out / "spectrum.csv")
    assert [int(r["order"]) for r in rows] == [-7, -5, -3, -1, 1, 3, 5, 7]
    doc = json.loads((out / "spectrum.json").read_text())
    assert doc["rows"][0].keys() >= {"order", "power_dBm", "above_floor"}
    assert (out / "spectrum.svg").stat().st_size > 0
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["system"]["alpha"] == 0.79


def test_outputs_are_byte_identical(tmp_path):
    a = run(tmp_path, "simulate", CONFIGS / "operating_point.yaml", "--svg", name="a")[1]
    b = run(tmp_path, "simulate", CONFIGS / "operating_point.yaml", "--svg", name="b")[1]
    for f in ("spectrum.csv", "spectrum.json", "spectrum.svg", "resolved_config.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_zero_drive_is_below_floor(tmp_path):
    code, out = run(tmp_path, "simulate", None)
    assert code == 0
    rows = read_csv(out / "spectrum.csv")
    assert all(r["power_dBm"] == "-inf" and r["above_floor"] == "0" for r in rows)


def test_floor_override(tmp_path):
    code, out = run(tmp_path, "simulate", CONFIGS / "operating_point.yaml",
                    "--floor-dbm", "0", "--format", "json")
    assert code == 0 and not (out / "spectrum.csv").exists()
    doc = json.loads((out / "spectrum.json").read_text())
    assert not any(r["above_floor"] for r in doc["rows"])


def test_compare_classical_quantum(tmp_path):
    code, out = run(tmp_path, "compare-classical-quantum", CONFIGS / "operating_point.yaml")
    assert code == 0
    rows = {int(r["order"]): r for r in read_csv(out / "comparison.csv")}
    assert abs(float(rows[1]["difference_dB"])) < 1e-3
    assert float(rows[-3]["difference_dB"]) > 0


def test_sweep_small_grid(tmp_path):
    cfg = write_yaml(tmp_path, """
system: {gamma_MHz: 1.7, Gamma_MHz: 1.8, delta_omega_MHz: 0.01, alpha: 0.79}
extraction: {samples_per_period: 64}
sweep: {kind: drive, axis1: [-10, 0], axis2: [-10, -5, 0]}
""")
    code, out = run(tmp_path, "sweep", cfg, "--svg", "--jobs", "2")
    assert code == 0
    rows = read_csv(out / "map.csv")
    assert len(rows) == 2 * 3 * 8
    assert (out / "map.svg").exists()


def test_classical_g2_antibunching(tmp_path):
    assert run(tmp_path, "classical", CONFIGS / "classical.yaml", name="c")[0] == 0
    rows = read_csv(tmp_path / "c" / "classical.csv")
    assert len(rows) == 9 * 9 * 8
    assert run(tmp_path, "g2", CONFIGS / "antibunching.yaml", name="g")[0] == 0
    g2 = read_csv(tmp_path / "g" / "g2.csv")
    assert all(float(r["g2"]) >= -1e-12 for r in g2)
    assert run(tmp_path, "antibunching", CONFIGS / "antibunching.yaml", name="a")[0] == 0
    ab = read_csv(tmp_path / "a" / "antibunching.csv")
    assert len(ab) == 3 * 41


def test_perturb(tmp_path):
    code, out = run(tmp_path, "perturb", CONFIGS / "perturbation.yaml")
    assert code == 0
    assert read_csv(out / "perturbation.csv")
    assert read_csv(out / "perturbation_net.csv")


def test_fit_transmission_bundled_data(tmp_path):
    code, out = run(tmp_path, "fit-transmission", CONFIGS / "transmission_fit.yaml")
    assert code == 0
    doc = json.loads((out / "fit_transmission.json").read_text())
    params = doc["parameters"]
    for name, value in (("gamma", 1.74), ("Gamma", 1.70)):
        assert params[name]["value_MHz"] == pytest.approx(value, rel=0.05)
    for name, value in (("gamma_phi", 0.15), ("Gamma_phi", 0.19)):
        assert params[name]["value_MHz"] == pytest.approx(value, rel=0.2)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cascade_qwm", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout


def test_fit_map_classical_forward(tmp_path):
    ax = np.linspace(-12.0, 3.0, 4)
    orders = (-5, -3, -1, 1, 3, 5)
    empty = spectrum.MixingMap(ax, ax, orders, np.zeros((4, 4, 6)))
    pw = calibration.MapForwardModel(empty, kind="classical")({"Gamma2_over_Gamma": 0.8}) - 2.0
    (tmp_path / "map.csv").write_text(spectrum.MixingMap(ax, ax, orders, pw).to_csv())
    cfg = write_yaml(tmp_path, """
fit_map:
  data: map.csv
  kind: classical
  init: {Gamma2_over_Gamma: 0.6}
  free: [Gamma2_over_Gamma]
  use_floor: false
""")
    code, out = run(tmp_path, "fit-map", cfg)
    assert code == 0
    rows = {r["name"]: float(r["value"]) for r in read_csv(out / "fit_map.csv")}
    assert rows["Gamma2_over_Gamma"] == pytest.approx(0.8, rel=1e-6)
    assert rows["gain_dB"] == pytest.approx(-2.0, abs=1e-6)


def test_fit_map_missing_data_exits_2(tmp_path):
    cfg = write_yaml(tmp_path, "fit_map:\n  data: nowhere.csv\n")
    assert run(tmp_path, "fit-map", cfg)[0] == 2
