import csv
import io
import json
import logging
import math

import numpy as np
import pytest

from geomgate import cli, gate, geompath, model
from geomgate.cli import RunConfig, parse_config, run_command, serialize

PRESET_A_TEXT = ('{"delta_large":10,"delta_small":0.1,"omega":1,"n_max":8,'
                 '"t_total":31.4159265,"dt":0.01,"model_kind":"transformed"}')


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj), encoding="utf-8")
    return str(path)


def read_rows(text):
    lines = text.splitlines()
    assert lines[0].startswith("# geomgate ")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


# -- config -------------------------------------------------------------------


def test_preset_b_with_gamma():
    cfg = parse_config('{"preset":"B","gamma_cav":0.037037}')
    params = cli.resolve_params(cfg)
    assert params.gamma_cav == pytest.approx(1 / 27, rel=1e-5)
    assert params.t_total == pytest.approx(105 * math.pi)


def test_preset_override_is_logged(caplog):
    cfg = parse_config('{"preset":"B","gamma_cav":0.01}')
    with caplog.at_level(logging.WARNING, logger="geomgate"):
        cli.resolve_params(cfg)
    assert "gamma_cav" in caplog.text


def test_missing_fields():
    with pytest.raises(cli.MissingField) as info:
        parse_config("{}")
    assert info.value.key in cli.REQUIRED_KEYS
    assert info.value.key in str(info.value)


def test_unknown_field_named():
    with pytest.raises(cli.UnknownField) as info:
        parse_config('{"preset":"A","detla_large":10}')
    assert info.value.key == "detla_large"


@pytest.mark.parametrize("literal", ["NaN", "Infinity", "-Infinity"])
def test_non_finite_value(literal):
    with pytest.raises(cli.NonFiniteValue) as info:
        parse_config('{"preset":"A","omega":%s}' % literal)
    assert info.value.key == "omega"


@pytest.mark.parametrize("text", ['{"preset":"A","n_max":8.5}', '{"preset":"A","model_kind":"x"}',
                                  '{"preset":"Z"}', '{"preset":"A","g":2}', "[1]", "{",
                                  '{"preset":"A","omega":"1"}', '{"preset":"A","dt":-1}'])
def test_invalid_configs(text):
    with pytest.raises(cli.ConfigError):
        parse_config(text)


def test_preset_a_equivalent():
    params = cli.resolve_params(parse_config(PRESET_A_TEXT))
    ref = gate.preset("A")
    assert (params.omega, params.delta_large, params.delta_small) == (ref.omega, ref.delta_large, ref.delta_small)
    assert params.t_total == pytest.approx(10 * math.pi, abs=1e-6)
    assert params.dt == 0.01


@pytest.mark.parametrize("text", [PRESET_A_TEXT, '{"preset":"B","gamma_cav":0.037037}',
                                  '{"preset":"A","format":"csv","output_path":"x.csv","n_max":12}'])
def test_round_trip(text):
    cfg = parse_config(text)
    assert parse_config(serialize(cfg)) == cfg


# -- commands -----------------------------------------------------------------


def test_gate_preset_a(capsys):
    assert run_command(["gate", "--preset", "A"]) == 0
    out = json.loads(capsys.readouterr().out)
    corrected = np.array([complex(*z) for z in out["corrected"]])
    assert np.allclose(corrected, [1, 1, 1, -1], atol=1e-3)
    assert out["meta"]["version"] == cli.__version__
    assert list(out)[:7] == ["phases", "residual_alpha", "purity", "corrected", "fidelity",
                             "max_excitation", "error_estimate"]


def test_usage_errors(capsys):
    assert run_command(["frobnicate"]) == 2
    assert run_command(["gate", "--bogus"]) == 2
    assert run_command([]) == 2
    assert run_command(["gate"]) == 2
    capsys.readouterr()


def test_missing_config_file(capsys, tmp_path):
    assert run_command(["gate", "--config", str(tmp_path / "missing.json")]) == 1
    assert "missing.json" in capsys.readouterr().err


def test_malformed_config_exit_1(capsys, tmp_path):
    path = write(tmp_path, "bad.json", '{"preset":"A","omega":1,"typo":3}')
    assert run_command(["gate", "--config", path]) == 1
    assert "typo" in capsys.readouterr().err


def test_gate_output_deterministic(tmp_path):
    cfg = write(tmp_path, "a.json", PRESET_A_TEXT)
    outs = [tmp_path / "1.json", tmp_path / "2.json"]
    for out in outs:
        assert run_command(["gate", "--config", cfg, "--output", str(out)]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()


def test_gate_csv_format(tmp_path, capsys):
    cfg = write(tmp_path, "a.json", {"preset": "A", "n_max": 12, "format": "csv"})
    assert run_command(["gate", "--config", cfg]) == 0
    rows = read_rows(capsys.readouterr().out)
    assert [r["state"] for r in rows] == list(model.QUBIT_LABELS)


def test_sweep_single_point(tmp_path, capsys):
    cfg = write(tmp_path, "a.json", {"preset": "A"})
    spec = write(tmp_path, "s.json", {"axes": [{"name": "omega", "values": [1.0]}]})
    assert run_command(["sweep", "--config", cfg, "--spec", spec]) == 0
    rows = read_rows(capsys.readouterr().out)
    assert len(rows) == 1
    # phi + Omega^2 t / Delta = -pi/2 + pi, wrapped
    assert float(rows[0]["phi_eg"]) == pytest.approx(math.pi / 2, abs=1e-3)
    assert rows[0]["status"] == "ok"


def test_sweep_empty_axis(tmp_path, capsys):
    cfg = write(tmp_path, "a.json", {"preset": "A"})
    spec = write(tmp_path, "s.json", {"axes": [{"name": "omega", "values": []}]})
    assert run_command(["sweep", "--config", cfg, "--spec", spec]) == 2
    spec = write(tmp_path, "s2.json", {"axes": [{"name": "omega", "linspace": [0.5, 1, 0]}]})
    assert run_command(["sweep", "--config", cfg, "--spec", spec]) == 2
    capsys.readouterr()


def test_sweep_bad_jobs(tmp_path, capsys, monkeypatch):
    cfg = write(tmp_path, "a.json", {"preset": "A"})
    spec = write(tmp_path, "s.json", {"axes": [{"name": "omega", "values": [1.0]}]})
    monkeypatch.setenv("GEOMGATE_JOBS", "many")
    assert run_command(["sweep", "--config", cfg, "--spec", spec]) == 2
    assert run_command(["sweep", "--config", cfg, "--spec", spec, "--jobs", "0"]) == 2
    capsys.readouterr()


def test_sweep_grid_order_and_failures(tmp_path):
    base = parse_config('{"preset":"A","n_max":12}')
    loop = gate.preset("A").loop_time()
    spec = cli.parse_sweep(json.dumps({"axes": [
        {"name": "omega", "linspace": [0.5, 1.0, 2]},
        {"name": "t_total", "values": [loop, loop / 2]},
    ]}), base)
    serial = cli.run_sweep(spec, jobs=1)
    parallel = cli.run_sweep(spec, jobs=2)
    assert len(serial) == 4
    assert [r[0] for r in serial] == [0, 1, 2, 3]
    assert cli.sweep_output(spec, 1) == cli.sweep_output(spec, 2)
    for a, b in zip(serial, parallel):
        assert a[:3] == b[:3] and a[-2:] == b[-2:]
    status = {(r[1], r[2]): r[-2] for r in serial}
    assert status[(1.0, loop)] == "ok"
    failed = [r for r in serial if r[-2] == "failed"]
    assert failed and all(r[-1] == "AmbiguousPhase" for r in failed)
    assert all(math.isfinite(r[3]) for r in failed)  # partial report keeps its phase


def test_sweep_spec_validation():
    base = parse_config('{"preset":"A"}')
    with pytest.raises(cli.UnknownField):
        cli.parse_sweep('{"axes":[{"name":"colour","values":[1]}]}', base)
    with pytest.raises(cli.ConfigError):
        cli.parse_sweep('{"axes":[{"name":"omega","values":[1,2],"with":{"dt":[0.1]}}]}', base)
    with pytest.raises(cli.EmptyAxis):
        cli.parse_sweep('{"axes":[]}', base)


def test_sweep_dispersive_convergence(tmp_path, capsys):
    # Delta in {10, 20, 40} with delta = 1/Delta and t = pi Delta, both models per point
    cfg = write(tmp_path, "base.json", {"preset": "A", "n_max": 10})
    spec = write(tmp_path, "spec.json", {"axes": [
        {"name": "delta_large", "values": [10, 20, 40],
         "with": {"delta_small": [0.1, 0.05, 0.025], "t_total": [10 * math.pi, 20 * math.pi, 40 * math.pi]}},
        {"name": "model_kind", "values": ["full", "effective"]},
    ]})
    assert run_command(["sweep", "--config", cfg, "--spec", spec]) == 0
    rows = read_rows(capsys.readouterr().out)
    assert len(rows) == 6
    # under the exact effective dynamics |ee> runs at delta + 2 g^2/Delta and does not
    # close at t = pi Delta, so those rows are flagged while phi_eg stays meaningful
    assert {r["error"] for r in rows if r["status"] == "failed"} <= {"AmbiguousPhase"}
    phi = {(float(r["delta_large"]), r["model_kind"]): float(r["phi_eg"]) for r in rows}
    gaps = [abs(phi[(d, "full")] - phi[(d, "effective")]) for d in (10.0, 20.0, 40.0)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_trajectory_analytic(tmp_path, capsys):
    cfg = write(tmp_path, "a.json", {"preset": "A"})
    assert run_command(["trajectory", "--config", cfg, "--analytic", "--samples", "201"]) == 0
    path = geompath.read_csv(capsys.readouterr().out)
    params = gate.preset("A")
    assert len(path) == 201 and path.closed
    assert np.max(np.abs(path.samples)) == pytest.approx(2 * params.radius, rel=1e-3)


def test_trajectory_simulated_follows_analytic(tmp_path, capsys):
    cfg = write(tmp_path, "a.json", {"preset": "A", "n_max": 12})
    assert run_command(["trajectory", "--config", cfg, "--samples", "20"]) == 0
    rows = read_rows(capsys.readouterr().out)
    params = gate.preset("A")
    for r in rows:
        alpha = complex(float(r["re_alpha"]), float(r["im_alpha"]))
        assert alpha == pytest.approx(model.alpha_trajectory(params, float(r["t"])), abs=1e-4)
        assert float(r["purity"]) == pytest.approx(1.0, abs=1e-9)


def test_verify_quick(capsys):
    assert run_command(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "passed, 0 failed" in out


def test_run_config_defaults():
    assert RunConfig().preset is None
    assert serialize(RunConfig(preset="A")) == '{\n  "preset": "A"\n}\n'
