import json
import subprocess
import sys

import pytest

from fracneumann.cli import ExperimentConfig, eval_fraction, main, read_config_file, run_experiment
from fracneumann.params import ParameterError


def read_csv_lines(path):
    return path.read_text().splitlines()


def test_unknown_experiment_exits_with_usage(capsys):
    assert main(["bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_experiment_exits_with_usage(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_invalid_parameter_exits_2(tmp_path, capsys):
    assert main(["solve", "--s", "1.5", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["truncation", "--H", "0.5,1", "--out", str(tmp_path)]) == 2


def test_solve_constant_solution(tmp_path):
    out = tmp_path / "solve"
    assert main(["solve", "--s", "0.4", "--h", "1/20", "--H", "0.5", "--alpha", "2", "--f", "2", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    res = summary["results"]["s=0.4"]
    assert res["tail_value"] == pytest.approx(1.0, abs=1e-6)
    assert res["omega_mean"] == pytest.approx(1.0, abs=1e-8)
    lines = read_csv_lines(out / "solution_s0p4.csv")
    assert lines[0].startswith("# config: ")
    config = json.loads(lines[0][len("# config: ") :])
    assert config["s"] == [0.4] and config["alpha"] == 2.0
    assert lines[1] == "x,u"
    assert len(lines) == 2 + res["n_nodes"]


def test_config_file_and_flag_override(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("# sweep\ns = 0.3, 0.6\nh = 1/10\nH = 0.5\nalpha = 3  # reaction\n")
    values = read_config_file(str(cfg_path))
    assert values == {"s": [0.3, 0.6], "h": [0.1], "H": [0.5], "alpha": 3.0}
    out = tmp_path / "o"
    assert main(["solve", "--config", str(cfg_path), "--s", "0.25", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["s"] == [0.25]
    assert summary["config"]["alpha"] == 3.0
    assert list(summary["results"]) == ["s=0.25"]


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(ParameterError):
        read_config_file(str(bad))
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2


def test_fraction_parsing():
    assert eval_fraction("1/250") == pytest.approx(0.004)
    assert eval_fraction(" 0.5 ") == 0.5


def test_reruns_are_byte_identical(tmp_path):
    args = ["truncation", "--s", "0.5", "--h", "1/10", "--H", "0.2,0.4,0.8", "--fit-from", "0", "--g-amplitude", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "a2"), "--threads", "2"]) == 0
    a = (tmp_path / "a" / "truncation_s0p5.csv").read_text()
    b = (tmp_path / "a2" / "truncation_s0p5.csv").read_text()
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "truncation_s0p5.csv").read_text() == a
    # only the recorded config (threads, output directory) differs between the two runs
    assert a.splitlines()[1:] == b.splitlines()[1:]
    assert a.splitlines()[1] == "H,difference"
    assert a.splitlines()[-1].startswith("fitted_slope,")


def test_rates_experiment(tmp_path):
    out = tmp_path / "rates"
    assert main(["rates", "--s", "0.5", "--h", "1/20,1/40,1/80", "--out", str(out)]) == 0
    res = json.loads((out / "summary.json").read_text())["results"]["s=0.5"]
    assert res["l2_slope"] == pytest.approx(1.0, abs=0.2)
    assert res["hs_slope"] == pytest.approx(0.5, abs=0.2)
    lines = read_csv_lines(out / "rates_s0p5.csv")
    assert lines[1] == "h,l2_error,hs_error,hs_seminorm_error"
    assert lines[-1].startswith("fitted_slope,")


def test_heat_experiment(tmp_path):
    out = tmp_path / "heat"
    assert main(["heat", "--s", "0.5", "--h", "1/20", "--H", "0.5", "--dt", "0.05", "--t-final", "1", "--out", str(out)]) == 0
    res = json.loads((out / "summary.json").read_text())["results"]["s=0.5"]
    assert res["initial_mean"] == pytest.approx(0.5, rel=1e-12)
    assert res["final_mean"] == pytest.approx(0.5, rel=1e-10)
    assert res["log_decay_slope"] < 0 and res["r_squared"] > 0.99
    assert read_csv_lines(out / "heat_s0p5.csv")[1] == "t,mean,l2_deviation"


def test_asymptotics_and_interp_experiments(tmp_path):
    out = tmp_path / "asym"
    assert main(["asymptotics", "--s", "0.5", "--h", "0.5", "--radius", "2,3", "--grading", "1", "--f", "2",
                 "--g-amplitude", "1", "--out", str(out)]) == 0
    res = json.loads((out / "summary.json").read_text())["results"]["s=0.5"]
    assert len(res["tail_values"]) == 2 and all(v < 0 for v in res["tail_values"])
    out2 = tmp_path / "interp"
    assert main(["interp-test", "--h", "0.2,0.1,0.05", "--out", str(out2)]) == 0
    assert json.loads((out2 / "summary.json").read_text())["results"]["slope"] >= 1.0


def test_run_experiment_validates():
    assert run_experiment(ExperimentConfig("solve", h=[-0.1])) == 2
    assert run_experiment(ExperimentConfig("solve", alpha=0.0)) == 2


def test_console_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fracneumann.cli", "nope"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr
