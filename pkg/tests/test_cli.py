import io
import json
import os
import subprocess
import sys

import pytest

from parampc.cli import EXIT_CONFIG, EXIT_CONTROLLER, EXIT_OK, main
from parampc.experiments import RunConfig, metrics_csv, run_sweep
from parampc.sim import SimulationTrace


def run(argv):
    out = io.StringIO()
    code = main(argv, out)
    return code, out.getvalue()


def test_simulate_smoke(tmp_path):
    code, out = run(["simulate", "--case", "msd", "--method", "exact", "--theta", "0.5",
                     "-o", str(tmp_path)])
    assert code == EXIT_OK
    trace = (tmp_path / "trace_msd_exact_theta0p5.csv").read_text()
    assert trace.splitlines()[0] == "t,x1,x2,u1,y1,r1,fallback"
    metrics = (tmp_path / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "case,method,theta,rmse,maxae,nrmse,regions,tv_u"
    assert len(metrics) == 2


def test_sweep_row_count(tmp_path):
    code, _ = run(["simulate", "--case", "msd", "--theta", "0,0.25,0.5,0.75,1", "--method",
                   "m1,m2-ni", "--jobs", "2", "--duration", "1", "-o", str(tmp_path)])
    assert code == EXIT_OK
    rows = (tmp_path / "metrics.csv").read_text().splitlines()[1:]
    assert len(rows) == 10


def test_hex_bang_bang_via_cli(tmp_path):
    code, _ = run(["simulate", "--case", "hex", "--method", "m2", "--variant", "inv",
                   "--theta", "1", "-o", str(tmp_path / "a")])
    assert code == EXIT_OK
    code, _ = run(["simulate", "--case", "hex", "--method", "m2", "--variant", "ni",
                   "--theta", "1", "-o", str(tmp_path / "b")])
    inv = (tmp_path / "a" / "metrics.csv").read_text().splitlines()[1].split(",")
    ni = (tmp_path / "b" / "metrics.csv").read_text().splitlines()[1].split(",")
    assert inv[1] == "m2-inv" and ni[1] == "m2-ni"
    assert float(inv[3]) > 0 and float(inv[7]) > float(ni[7])


@pytest.mark.parametrize("argv,field", [
    (["simulate", "--case", "foo"], "case"),
    (["simulate", "--method", "bogus"], "method"),
    (["simulate", "--theta", "1.5"], "theta"),
    (["simulate", "--horizon", "0"], "horizon"),
    (["regions", "--method", "m2-inv"], "method"),
])
def test_config_errors(argv, field, capsys, tmp_path):
    code, _ = run(argv + ["-o", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert f"{field}:" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--no-such-flag"])
    assert info.value.code == EXIT_CONFIG


def test_bad_config_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"case": "msd", "colour": 1}')
    assert run(["simulate", "--config", str(path)])[0] == EXIT_CONFIG
    path.write_text("{not json")
    assert run(["simulate", "--config", str(path)])[0] == EXIT_CONFIG


def test_controller_failure_exit_code(tmp_path, monkeypatch):
    import parampc.experiments as ex
    from parampc.qp import QpError

    def boom(*args, **kwargs):
        raise QpError("forced")

    monkeypatch.setattr(ex.Setup, "controller", lambda self, m: boom)
    code, _ = run(["simulate", "--case", "msd", "--method", "m1", "-o", str(tmp_path)])
    assert code == EXIT_CONTROLLER


def test_dump_config_round_trip(tmp_path):
    code, text = run(["simulate", "--case", "hex", "--method", "m1,m2-ni", "--theta", "0.5",
                      "--duration", "200", "--dump-config"])
    assert code == EXIT_OK
    cfg = RunConfig.from_json(text)
    assert cfg.methods == ["m1", "m2-ni"] and cfg.horizon == 4 and cfg.q_scale == 100.0
    path = tmp_path / "cfg.json"
    path.write_text(text)
    code, again = run(["dump", "--config", str(path)])
    assert again == text
    a = metrics_csv(run_sweep(cfg))
    b = metrics_csv(run_sweep(RunConfig.from_json(again)))
    assert a == b


def test_flags_override_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"case": "msd", "thetas": [0.2], "horizon": 3}))
    code, text = run(["dump", "--config", str(path), "--theta", "0.7"])
    cfg = json.loads(text)
    assert cfg["thetas"] == [0.7] and cfg["horizon"] == 3


def test_seed_precedence(monkeypatch, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 5}))
    assert json.loads(run(["dump", "--config", str(path)])[1])["seed"] == 5
    monkeypatch.setenv("PARAMPC_SEED", "7")
    assert json.loads(run(["dump", "--config", str(path)])[1])["seed"] == 7
    assert json.loads(run(["dump", "--seed", "3"])[1])["seed"] == 3
    monkeypatch.setenv("PARAMPC_SEED", "x")
    assert run(["dump"])[0] == EXIT_CONFIG


def test_default_seed(monkeypatch):
    monkeypatch.delenv("PARAMPC_SEED", raising=False)
    assert json.loads(run(["dump"])[1])["seed"] == 42


def test_regions_export(tmp_path):
    path = tmp_path / "law.json"
    code, out = run(["regions", "--case", "msd", "--method", "exact", "--theta", "0.5",
                     "--export", str(path)])
    assert code == EXIT_OK and "regions=18" in out
    doc = json.loads(path.read_text())
    assert doc["schema"] == "parampc-pwa/1" and len(doc["regions"]) == 18
    keys = set(doc["regions"][0])
    assert {"active_set", "gain", "offset", "region_a", "region_b"} <= keys


def test_regions_unconstrained_toy(tmp_path):
    model = {
        "name": "toy", "a": {"base": [[0.9]], "deltas": [[[0.05]]]}, "b": [[0.1]],
        "c": [[1.0]], "ts": 0.1, "state_box": [[-1.0, 1.0]], "input_box": [[-1e6, 1e6]],
    }
    path = tmp_path / "toy.json"
    path.write_text(json.dumps(model))
    code, out = run(["regions", "--case", str(path), "--method", "exact,m2-ni", "--theta", "0.3",
                     "-o", str(tmp_path)])
    assert code == EXIT_OK
    assert out.count("regions=1 ") == 2


def test_regions_partial_warning(tmp_path, capsys):
    code, out = run(["regions", "--case", "msd", "--method", "exact", "--max-regions", "2",
                     "-o", str(tmp_path)])
    assert code == EXIT_OK and "partial=true" in out
    assert "partial" in capsys.readouterr().err


def test_plotdata(tmp_path):
    run(["simulate", "--case", "msd", "--method", "m1", "--duration", "0.05", "-o",
         str(tmp_path)])
    trace = tmp_path / "trace_msd_m1_theta0p5.csv"
    out_path = tmp_path / "long.csv"
    code, _ = run(["plotdata", str(trace), "-o", str(out_path)])
    lines = out_path.read_text().splitlines()
    assert code == EXIT_OK and lines[0] == "run,t,signal,value"
    tr = SimulationTrace.from_csv(trace.read_text())
    assert len(lines) - 1 == len(tr) * 6
    assert run(["plotdata", str(tmp_path / "metrics.csv")])[0] == EXIT_CONFIG


def test_dump_model_and_reference():
    code, text = run(["dump", "--case", "msd", "--what", "model"])
    assert code == EXIT_OK and json.loads(text)["name"] == "msd"
    code, text = run(["dump", "--case", "msd", "--what", "reference", "--duration", "0.05"])
    assert text.splitlines() == ["t,r1", "0.0,0.005", "0.01,0.005", "0.02,0.005", "0.03,0.005",
                                 "0.04,0.005"]


def test_byte_identical_outputs(tmp_path):
    for sub in ("a", "b"):
        assert run(["simulate", "--case", "hex", "--method", "m1,m2-inv", "--theta", "0.5,1",
                    "--jobs", "2", "-o", str(tmp_path / sub)])[0] == EXIT_OK
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "parampc.cli", "simulate", "--case", "nope"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG and "case" in proc.stderr
