import csv
import json

import pytest

from nhrmt.errors import ConfigError
from nhrmt.harness import RunReport, emit_plot_data, make_config, run_experiment
from nhrmt.harness.cli import main
from nhrmt.harness.config import load_config
from nhrmt.harness.runner import map_samples


def _flaky(payload, i):
    if i in payload["bad"]:
        raise ValueError(f"sample {i} is broken")
    return {"value": float(i * i)}


@pytest.mark.parametrize("raw", [
    {"experiment": "nope"},
    {"experiment": "kernel-mc", "n": 1},
    {"experiment": "kernel-mc", "zeta1": 0.9},
    {"experiment": "kernel-mc", "law": "cauchy"},
    {"experiment": "kernel-mc", "profile": {"kind": "spiral"}},
    {"experiment": "kernel-mc", "samples": -1},
    {"experiment": "kernel-mc", "n": 2.5},
    {"experiment": "autocorr", "g": 1.0},
    {"experiment": "decay", "g": 1.2},
    {"experiment": "linearization", "alpha": 0.0},
    {"experiment": "decay", "window": [0.0, 500.0]},
    {"experiment": "kernel-mc", "unknown_field": 3},
    {"n": 5},
])
def test_invalid_configs_rejected(raw):
    with pytest.raises(ConfigError):
        make_config(raw)


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"experiment": "kernel-mc", "n": 30, "samples": 2, "seed": 4,
                                "zeta1": "1.2+0.5j", "profile": "two-block"}))
    cfg = load_config(path, {"samples": 3})
    assert (cfg.n, cfg.samples, cfg.seed) == (30, 3, 4)
    assert cfg.zeta1 == 1.2 + 0.5j and cfg.profile == {"kind": "two-block"}


def test_cli_config_error_exit_code(capsys):
    assert main(["gap", "--zeta1", "0.5"]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_pass_exit_code(tmp_path, capsys):
    code = main(["kernel-mc", "--n", "60", "--samples", "3", "--zeta1", "2", "--zeta2", "2",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["predicted"]["re"] == pytest.approx(1 / 3)
    assert (tmp_path / "samples.csv").exists()


def test_cli_fail_exit_code(capsys):
    # the doubling ratio sits at 1, outside [3, 5], so this run always fails
    assert main(["linearization", "--n", "10", "--samples", "2"]) == 1
    assert main(["accept-all", "--criteria", "11"]) == 2


def test_kernel_mc_example():
    rep = run_experiment(make_config({"experiment": "kernel-mc", "n": 400, "samples": 50}))
    assert rep.predicted == pytest.approx(0.8, abs=1e-14)
    assert rep.details["abs_mean_error"] <= 0.05
    assert rep.passed


def test_report_reproducible_and_worker_independent():
    raw = {"experiment": "kernel-mc", "n": 80, "samples": 5, "seed": 7}
    a = run_experiment(make_config(raw)).to_json()
    b = run_experiment(make_config(raw)).to_json()
    c = run_experiment(make_config({**raw, "workers": 2})).to_json()
    assert a == b == c
    assert "time" not in json.loads(a)["provenance"]


def test_provenance_fields():
    rep = run_experiment(make_config({"experiment": "mde-check"}))
    assert set(rep.provenance) == {"config_hash", "seed", "code_version"}
    other = run_experiment(make_config({"experiment": "mde-check", "seed": 1}))
    assert other.provenance["config_hash"] != rep.provenance["config_hash"]


@pytest.mark.parametrize("workers", [1, 2])
def test_sample_failures_are_isolated(workers):
    clean = map_samples(_flaky, {"bad": []}, range(6), workers)
    mixed = map_samples(_flaky, {"bad": [1, 4]}, range(6), workers)
    assert [r["sample_index"] for r in mixed] == list(range(6))
    for c, m in zip(clean, mixed):
        if m["sample_index"] in (1, 4):
            assert m["flagged"] and "broken" in m["error"]
        else:
            assert m == c


def test_flagged_rows_in_experiment():
    # a contour barely outside the unit disk misses some sampled spectra
    rep = run_experiment(make_config({"experiment": "functional", "n": 30, "samples": 6,
                                      "power": 1, "contour": {"radius": 1.06, "nodes": 1024}}))
    flagged = [r for r in rep.samples if r["flagged"]]
    assert flagged and len(flagged) < 6
    assert rep.passed is False
    assert all("error" in r for r in flagged)


@pytest.mark.parametrize("experiment", ["functional", "mde-check", "f-operator", "gap",
                                        "autocorr", "hermitian-decay", "linearization"])
def test_every_experiment_runs(experiment, tmp_path):
    small = {"functional": {"n": 40, "samples": 1}, "mde-check": {},
             "f-operator": {"profile": "row-stochastic-random"},
             "gap": {"n": 60, "samples": 2}, "autocorr": {"n": 40},
             "hermitian-decay": {"n": 200}, "linearization": {"n": 10, "samples": 2}}
    cfg = make_config({"experiment": experiment, "out_dir": str(tmp_path), **small[experiment]})
    rep = run_experiment(cfg)
    assert (tmp_path / "report.json").exists()
    assert json.loads(rep.to_json())["experiment"] == experiment


def test_decay_prediction_only_slope():
    rep = run_experiment(make_config({"experiment": "decay", "samples": 0}))
    assert -0.52 <= rep.predicted["slope"] <= -0.48
    assert rep.passed


def test_plot_data_decay(tmp_path):
    rep = run_experiment(make_config({"experiment": "decay", "samples": 0}))
    path = emit_plot_data(rep, tmp_path / "decay.csv")
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "empirical_mean", "empirical_stderr", "predicted"]
    assert rows[1][1] == "" and float(rows[1][3]) > 0


def test_plot_data_decay_with_samples(tmp_path):
    rep = run_experiment(make_config({"experiment": "decay", "n": 60, "samples": 2,
                                      "grid": {"kind": "linear", "start": 1, "stop": 5,
                                               "step": 1}, "window": [1, 5]}))
    rows = list(csv.reader(open(emit_plot_data(rep, tmp_path / "d.csv"))))
    assert len(rows) == 6 and all(v != "" for v in rows[1])


def test_plot_data_autocorr(tmp_path):
    rep = run_experiment(make_config({"experiment": "autocorr", "n": 40}))
    rows = list(csv.reader(open(emit_plot_data(rep, tmp_path / "a.csv"))))
    assert rows[0] == ["tau", "empirical", "predicted", "relative_error"]
    assert float(rows[1][2]) == pytest.approx(1 / (2 * 0.75**0.5))


def test_plot_data_empty_report(tmp_path):
    with pytest.raises(ValueError, match="no curve data"):
        emit_plot_data(RunReport("kernel-mc", {}), tmp_path / "x.csv")
