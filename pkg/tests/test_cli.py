import json
import math
from pathlib import Path

import numpy as np
import pytest

from rydiss.cli import EXIT_CONFIG, EXIT_NO_RESULT, EXIT_NUMERIC, EXIT_OK, format_csv, load_config, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

EVOLVE = """
scenario = "pair_exchange"
engine = "{engine}"
initial_state = "00"
outputs = ["loss_fraction", "pop:00"]
seed = 5
{extra}

[parameters]
w = 0.2
gamma = 0.08
V = 2.0

[grid]
t1 = 1.0
n_steps = 20
"""


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(tmp_path, *argv, out="out"):
    return main([*argv, "--out", str(tmp_path / out)])


def test_evolve_writes_csv_and_manifest(tmp_path):
    cfg = _write(tmp_path, EVOLVE.format(engine="lindblad", extra=""))
    assert _run(tmp_path, "evolve", "--config", str(cfg)) == EXIT_OK
    lines = (tmp_path / "out" / "timeseries.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["t_us", "loss_fraction", "pop:00"]
    assert len(lines) == 22
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config"]["scenario"] == "pair_exchange"
    assert set(manifest["outputs"]) == {"timeseries.csv"}


def test_evolve_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, EVOLVE.format(engine="lindblad", extra=""))
    _run(tmp_path, "evolve", "--config", str(cfg), out="a")
    _run(tmp_path, "evolve", "--config", str(cfg), out="b")
    assert (tmp_path / "a" / "timeseries.csv").read_bytes() == (tmp_path / "b" / "timeseries.csv").read_bytes()


def test_manifest_reproduces_run(tmp_path):
    cfg = _write(tmp_path, EVOLVE.format(engine="lindblad", extra=""))
    _run(tmp_path, "evolve", "--config", str(cfg), out="a")
    assert _run(tmp_path, "evolve", "--config", str(tmp_path / "a" / "manifest.json"), out="b") == EXIT_OK
    assert (tmp_path / "a" / "timeseries.csv").read_bytes() == (tmp_path / "b" / "timeseries.csv").read_bytes()


def test_trajectory_runs_depend_on_seed_only(tmp_path):
    cfg = _write(tmp_path, EVOLVE.format(engine="trajectories", extra="n_traj = 300"))
    _run(tmp_path, "evolve", "--config", str(cfg), out="a")
    _run(tmp_path, "evolve", "--config", str(cfg), "--jobs", "3", out="b")
    _run(tmp_path, "evolve", "--config", str(cfg), "--seed", "6", out="c")
    a, b, c = ((tmp_path / d / "timeseries.csv").read_bytes() for d in "abc")
    assert a == b and a != c


def test_sweep_row_count(tmp_path):
    cfg = _write(tmp_path, """
[sweep]
family = "pair_exchange"
[[sweep.axes]]
name = "wc_over_gamma"
start = 0.0
stop = 3.0
num = 11
[[sweep.axes]]
name = "V_over_gamma"
values = [0.0, 10.0]
""")
    assert _run(tmp_path, "sweep", "--config", str(cfg)) == EXIT_OK
    lines = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "wc_over_gamma,V_over_gamma,branch_index,re_lambda_MHz,im_lambda_MHz"
    assert len(lines) == 1 + 11 * 2 * 3


def test_sweep_empty_axis_is_config_error(tmp_path):
    cfg = _write(tmp_path, """
[sweep]
family = "pair_exchange"
[[sweep.axes]]
name = "wc_over_gamma"
values = []
""")
    assert _run(tmp_path, "sweep", "--config", str(cfg)) == EXIT_CONFIG


def test_ep_single_atom(tmp_path):
    cfg = _write(tmp_path, """
[ep]
family = "single_atom"
axis = "w_over_gamma"
range = [0.0, 1.0]
""")
    assert _run(tmp_path, "ep", "--config", str(cfg)) == EXIT_OK
    report = json.loads((tmp_path / "out" / "ep.json").read_text())
    assert report["location"] == pytest.approx(0.25, abs=1e-6)


def test_ep_without_dissipation_exits_4(tmp_path):
    cfg = _write(tmp_path, """
[ep]
family = "single_atom"
axis = "w_over_gamma"
range = [0.0, 1.0]
fixed = { gamma = 0.0 }
""")
    assert _run(tmp_path, "ep", "--config", str(cfg)) == EXIT_NO_RESULT


def test_fit_round_trip(tmp_path):
    t = np.linspace(0, 3, 31)
    y = 1 - np.exp(-2 * math.pi * 0.11 * t)
    data = tmp_path / "loss.csv"
    data.write_text(format_csv(["t_us", "loss_fraction"], [t, y]))
    assert _run(tmp_path, "fit", "--input", str(data), "--model", "exp_loss") == EXIT_OK
    report = json.loads((tmp_path / "out" / "fit.json").read_text())
    assert report["converged"] is True
    assert report["gamma_MHz"] == pytest.approx(0.11, abs=1e-6)


def test_shipped_fit_config(tmp_path):
    assert _run(tmp_path, "fit", "--config", str(CONFIGS / "rabi_fit.toml")) == EXIT_OK
    report = json.loads((tmp_path / "out" / "fit.json").read_text())
    assert report["w_MHz"] == pytest.approx(0.15, abs=1e-6)


def test_fit_too_few_points_is_config_error(tmp_path):
    data = tmp_path / "short.csv"
    data.write_text("t_us,loss_fraction\n0,0\n1,0.5\n")
    assert _run(tmp_path, "fit", "--input", str(data), "--model", "exp_loss") == EXIT_CONFIG


def test_fit_constant_data_exits_4(tmp_path):
    data = tmp_path / "flat.csv"
    t = np.linspace(0, 1, 20)
    data.write_text(format_csv(["t_us", "P_1_site0"], [t, np.full(20, 0.3)]))
    assert _run(tmp_path, "fit", "--input", str(data), "--model", "cosine") == EXIT_NO_RESULT
    assert (tmp_path / "out" / "fit.json").exists()


@pytest.mark.parametrize("text", [
    'scenario = "nope"\n[grid]\nt1 = 1.0\n',
    EVOLVE.format(engine="lindblad", extra="").replace('"pop:00"', '"no_such_track"'),
    EVOLVE.format(engine="lindblad", extra="").replace("V = 2.0", "V = 2.0\nfoo = 1.0"),
    EVOLVE.format(engine="warp", extra=""),
    "this is not toml = = =",
])
def test_config_errors_exit_2(tmp_path, text, capsys):
    cfg = _write(tmp_path, text)
    assert _run(tmp_path, "evolve", "--config", str(cfg)) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert _run(tmp_path, "evolve", "--config", str(tmp_path / "absent.toml")) == EXIT_CONFIG


def test_unstable_step_exits_3(tmp_path):
    text = EVOLVE.format(engine="lindblad", extra="").replace("n_steps = 20", "n_steps = 2\ndt = 5.0")
    text = text.replace("V = 2.0", "V = 200.0")
    cfg = _write(tmp_path, text)
    assert _run(tmp_path, "evolve", "--config", str(cfg)) == EXIT_NUMERIC


def test_load_config_reads_manifest_echo(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"config": {"scenario": "chain"}}))
    assert load_config(p) == {"scenario": "chain"}


def test_pair_loss_fraction_rejected_on_manifold_engine(tmp_path, capsys):
    cfg = _write(tmp_path, EVOLVE.format(engine="nonhermitian", extra=""))
    assert _run(tmp_path, "evolve", "--config", str(cfg)) == EXIT_CONFIG
    assert "'loss_fraction' needs the loss level" in capsys.readouterr().err
