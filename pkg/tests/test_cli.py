import json
import math

import pytest

from repulsion_guidance.cli import main
from repulsion_guidance.config import ConfigError, RunConfig, apply_overrides, parse_config

BASE = 'preset = "paper-default"\n[scenario]\ntf = 100.0\n'


def run(tmp_path, cmd, text, *extra):
    tmp_path.mkdir(parents=True, exist_ok=True)
    cfg = tmp_path / "run.toml"
    cfg.write_text(text)
    out = tmp_path / cmd
    code = main([cmd, str(cfg), "-o", str(out), *extra])
    return code, out


def test_preset_expands():
    cfg = parse_config(BASE)
    p = cfg.model_params()
    assert (p.m_d, p.m_e, p.nu_d, p.nu_e) == (0.4, 1, 1, 2)
    assert (p.c_attract, p.c_repel, p.c_circ) == (3, 2, 0.5)
    sc = cfg.scenario_obj()
    assert sc.initial.u_d == (-6, 0) and sc.initial.u_e == (6, 0) and sc.target == (1, 1)


def test_json_equivalent():
    cfg = parse_config(json.dumps({"preset": "paper-default", "scenario": {"tf": 100}}))
    assert cfg == parse_config(BASE)


def test_missing_tf():
    with pytest.raises(ConfigError, match="scenario.tf"):
        parse_config('preset = "paper-default"\n[scenario]\nrho = 1e-4\n')


def test_negative_mass():
    with pytest.raises(ConfigError, match="m_d must be positive"):
        parse_config(BASE + "[scenario.params]\nm_d = -1\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="stepper.step: Extra inputs"):
        parse_config(BASE + "[stepper]\nstep = 1\n")


def test_no_preset_requires_everything():
    with pytest.raises(ConfigError, match="required"):
        parse_config("[scenario]\ntf = 10\n")


def test_parse_error_has_location():
    with pytest.raises(ConfigError, match="line"):
        parse_config("[scenario\ntf = 1\n")


def test_overrides_and_provenance():
    data, log = apply_overrides({"scenario": {"tf": 100}}, ["scenario.tf=60", "seed=3"])
    assert data["scenario"]["tf"] == 60 and data["seed"] == 3
    assert log[0] == {"key": "scenario.tf", "value": 60, "previous": 100,
                      "source": "command line"}


def test_simulate_pursuit(tmp_path):
    code, out = run(tmp_path, "simulate", BASE)
    assert code == 0
    last = (out / "trajectory.csv").read_text().strip().splitlines()[-1].split(",")
    assert abs(float(last[-1]) - math.sqrt(2)) < 0.01
    assert (out / "speed.csv").exists()


def test_asymptotics(tmp_path, capsys):
    code, out = run(tmp_path, "asymptotics", BASE)
    assert code == 0
    res = json.loads((out / "summary.json").read_text())["result"]
    assert round(res["delta_as"], 5) == 1.41421 and round(res["v_as"], 5) == 0.70711


def test_shoot0(tmp_path):
    code, out = run(tmp_path, "shoot0", BASE + "[shoot0]\nkappa0 = 1\n")
    assert code == 0
    res = json.loads((out / "summary.json").read_text())["result"]
    assert 40.65 <= res["tau_star"] <= 41.65 and res["n_ig"] == 0


def test_shoot1_single(tmp_path):
    code, out = run(tmp_path, "shoot1", BASE + "[shoot1]\nt_on = 42.0\n",
                    "--set", "scenario.tf=60")
    assert code == 0
    res = json.loads((out / "summary.json").read_text())["result"]
    assert abs(res["t_off_star"] - 45.5337) < 0.05 and res["n_ig"] == 1


def test_feedback_segments_json(tmp_path):
    code, out = run(tmp_path, "feedback", BASE, "--set", "scenario.tf=63")
    assert code == 0
    res = json.loads((out / "summary.json").read_text())["result"]
    assert set(res["segments"][0]) == {"t_start", "t_end", "kappa"}


def test_cost_curve_csv(tmp_path):
    text = BASE + "[cost_curve]\nkappa0 = 1\nstart = 40.0\nstop = 40.5\nstep = 0.25\nworkers = 1\n"
    code, out = run(tmp_path, "cost-curve", text, "--set", "scenario.tf=60")
    assert code == 0
    lines = (out / "cost_curve.csv").read_text().splitlines()
    assert lines[0] == "t_on,cost,complete" and len(lines) == 4


def test_path_lists_unreached(tmp_path):
    text = BASE + '[path]\nkind = "list"\nwaypoints = [[1.0, 1.0], [-30.0, 30.0]]\n'
    code, out = run(tmp_path, "path", text, "--set", "scenario.tf=70")
    assert code == 0
    res = json.loads((out / "summary.json").read_text())["result"]
    assert res["unreached"] == [1]


def test_error_exit_code_and_json(tmp_path, capsys):
    code, out = run(tmp_path, "simulate", BASE, "--set", "scenario.params.m_d=-1")
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and "m_d" in err["message"]


def test_shooting_error_code(tmp_path, capsys):
    # far too short a horizon to turn the evader back
    code, _ = run(tmp_path, "shoot0", BASE + "[shoot0]\nkappa0 = 1\n", "--set", "scenario.tf=20")
    assert code == 4
    assert json.loads(capsys.readouterr().err)["exit_code"] == 4


def test_reproducible_outputs(tmp_path):
    text = BASE + "[simulate]\nkappa = 1\n"
    _, a = run(tmp_path / "a", "simulate", text, "--set", "scenario.tf=20")
    _, b = run(tmp_path / "b", "simulate", text, "--set", "scenario.tf=20")
    for name in ("trajectory.csv", "speed.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_summary_config_revalidates(tmp_path):
    _, out = run(tmp_path, "simulate", BASE, "--set", "scenario.tf=5")
    summary = json.loads((out / "summary.json").read_text())
    cfg = RunConfig.model_validate(summary["config"])
    assert cfg.scenario.tf == 5
    assert summary["overrides"][0]["key"] == "scenario.tf"
