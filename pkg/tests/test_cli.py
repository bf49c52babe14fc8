"""Command-line interface: outputs, determinism, exit codes."""

import json
import math

import pytest

from aeonsim import cli


def run(argv):
    return cli.main(argv)


def test_spectrum_csv_output(tmp_path):
    out = tmp_path / "spec.csv"
    code = run(["spectrum", "--j12", "40e6", "--j23", "40e6", "--j13", "40e6",
                "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "level (1),energy (rad/s)"
    assert len(lines) == 9
    energies = [float(ln.split(",")[1]) for ln in lines[1:]]
    gap = energies[4] - energies[3]
    assert gap == pytest.approx(3 * math.pi * 40e6, rel=1e-10)


def test_fingerpinch_csv(tmp_path):
    out = tmp_path / "fp.csv"
    code = run(["fingerpinch", "--pairs", "12,23", "--v1", "0.05:0.08:5",
                "--v2", "0.05:0.08:5", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "v_x12 (V),v_x23 (V),p0 (1)"
    assert len(lines) == 26


def test_rabi_json_and_plot_data(tmp_path):
    out = tmp_path / "rabi.json"
    plot = tmp_path / "rabi.csv"
    code = run(["rabi", "--pair", "12", "--v", "0.0738",
                "--times", "0:100e-9:50", "--out", str(out),
                "--emit-plot-data", str(plot)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["fit"]["frequency_hz"] == pytest.approx(49.906207808511235e6, rel=1e-6)
    assert doc["fit"]["t_decay_s"] is None  # noiseless: no decay
    assert plot.read_text().splitlines()[0] == "time (s),p0 (1)"


def test_calibrate_round_trips_and_is_deterministic(tmp_path):
    args = ["calibrate", "--phi-star", "-1.5707963267948966",
            "--theta-star", "3.141592653589793",
            "--schedule", "1,2,4", "--grid", "13"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(args + ["--out", str(a)]) == 0
    assert run(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["pairs"] == ["12", "23"]
    assert len(doc["stages"]) == 3


def test_calibrate_threads_do_not_change_bytes(tmp_path):
    args = ["calibrate", "--phi-star", "0.0", "--theta-star", "3.141592653589793",
            "--schedule", "1,2", "--grid", "11"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(args + ["--threads", "1", "--out", str(a)]) == 0
    assert run(args + ["--threads", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_rb_channel_json(tmp_path):
    out = tmp_path / "rb.json"
    code = run(["rb", "--engine", "channel", "--inject-depol", "1e-3",
                "--depths", "1,2,4,8,16", "--sequences", "8", "--out", str(out),
                "--emit-plot-data", str(tmp_path / "rb.csv")])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["fit"]["error_per_pulse"] == pytest.approx(1e-3, rel=0.25)
    header = (tmp_path / "rb.csv").read_text().splitlines()[0]
    assert header == "depth (1),survival_identity (1),survival_flip (1)"


def test_irb_channel_json(tmp_path):
    out = tmp_path / "irb.json"
    code = run(["irb", "--engine", "channel", "--gate-depol", "1e-3",
                "--gate-phi", "-1.5707963267948966",
                "--gate-theta", "3.141592653589793",
                "--depths", "1,2,4,8,16,32", "--sequences", "12",
                "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["gate_error"] == pytest.approx(1e-3, abs=3e-4)


def test_json_keys_are_sorted(tmp_path):
    out = tmp_path / "rb.json"
    run(["rb", "--engine", "channel", "--depths", "1,2", "--sequences", "3",
         "--out", str(out)])
    doc = out.read_text()
    assert json.dumps(json.loads(doc), indent=2, sort_keys=True) + "\n" == doc


def test_env_seed_override(tmp_path, monkeypatch):
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    args = ["rb", "--engine", "channel", "--inject-depol", "1e-3",
            "--depths", "1,4,8,16", "--sequences", "4", "--shots", "25"]
    monkeypatch.setenv("AEON_SEED", "1")
    run(args + ["--out", str(out1)])
    monkeypatch.setenv("AEON_SEED", "2")
    run(args + ["--out", str(out2)])
    assert out1.read_bytes() != out2.read_bytes()
    # explicit flag wins over the environment
    out3 = tmp_path / "c.json"
    run(args + ["--seed", "1", "--out", str(out3)])
    assert out3.read_bytes() == out1.read_bytes()


def test_usage_error_exit_code():
    assert run(["rabi", "--pair", "99", "--v", "0.07", "--times", "0:1e-7:20"]) == 2
    assert run(["fingerpinch", "--pairs", "12,23", "--v1", "oops",
                "--v2", "0:1:5"]) == 2
    assert run(["no-such-command"]) == 2


def test_numeric_failure_exit_code(tmp_path):
    # too few samples for the oscillation fit
    code = run(["rabi", "--pair", "12", "--v", "0.0738", "--times", "0:100e-9:5",
                "--out", str(tmp_path / "x.json")])
    assert code == 3


def test_config_error_exit_code(tmp_path):
    assert run(["spectrum", "--config", str(tmp_path / "missing.json")]) == 4
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["spectrum", "--config", str(bad)]) == 4
    # single-coupling target axis cannot be calibrated in a wedge
    assert run(["calibrate", "--phi-star", "1.5707963267948966",
                "--theta-star", "3.141592653589793"]) == 4


def test_custom_device_config(tmp_path):
    cfg = tmp_path / "dev.json"
    cfg.write_text(json.dumps({"exchange_law": {
        "12": {"A_hz": 1e6, "B_per_v": 52.983, "C": 0.05}}}))
    out = tmp_path / "fp.csv"
    code = run(["fingerpinch", "--config", str(cfg), "--pairs", "12,23",
                "--v1", "0.05:0.08:5", "--v2", "0.05:0.08:5", "--out", str(out)])
    assert code == 0
