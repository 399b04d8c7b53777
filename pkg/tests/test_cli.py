import csv
import json

import pytest

from damrl.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _rows(path):
    return list(csv.DictReader(open(path)))


def test_synthesize_deterministic_and_manifest(workdir):
    assert main(["synthesize", "--out", "a.csv", "--years", "2", "--seed", "3"]) == 0
    assert main(["synthesize", "--out", "b.csv", "--years", "2", "--seed", "3"]) == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
    manifest = json.loads((workdir / "a.manifest.json").read_text())
    assert manifest["command"] == "synthesize" and manifest["seed"] == 3
    assert manifest["config"]["synthetic.runoff_coefficient"] == 0.25
    assert "created" in manifest and "created" not in (workdir / "a.csv").read_text()
    assert manifest["artifacts"]["data"]["sha256"]


def test_fit_inflow_reports_all_models(workdir):
    (workdir / "drift.cfg").write_text("synthetic.drift_sd = 0.05\n")
    assert main(["synthesize", "--config", "drift.cfg", "--out", "d.csv"]) == 0
    assert main(["fit-inflow", "--data", "d.csv", "--train-end", "2018", "--test-year", "2019",
                 "--k", "7", "--out-dir", "inf"]) == 0
    for name in ("gls.json", "dlm.json", "gls_dlm.json"):
        assert (workdir / "inf" / name).exists()
    nse = json.loads((workdir / "inf" / "metrics.json").read_text())["nse"]
    assert nse["REPLAY"] == {"train": 1.0, "test": 1.0}
    assert nse["DLM"]["test"] > nse["GLS"]["test"]
    assert nse["DLM"]["train"] > nse["GLS"]["train"]


def test_fit_inflow_is_reproducible(workdir):
    assert main(["fit-inflow", "--out-dir", "a"]) == 0
    assert main(["fit-inflow", "--out-dir", "b"]) == 0
    for name in ("gls.json", "dlm.json", "gls_dlm.json", "metrics.json", "dlm_test_forecasts.csv"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()


def test_train_evaluate_roundtrip(workdir):
    args = ["train", "--algo", "ddpg", "--steps", "600", "--eval-interval", "200", "--seed", "1"]
    assert main(args + ["--out-dir", "t1"]) == 0
    assert main(args + ["--out-dir", "t2"]) == 0
    for name in ("policy.json", "curve.csv"):
        assert (workdir / "t1" / name).read_bytes() == (workdir / "t2" / name).read_bytes()
    curve = _rows(workdir / "t1" / "curve.csv")
    assert [int(r["step"]) for r in curve] == [200, 400, 600]
    assert main(["evaluate", "--policies", "t1/policy.json", "--baseline", "--out-dir", "ev"]) == 0
    report = json.loads((workdir / "ev" / "metrics.json").read_text())["policies"]
    assert set(report) == {"policy", "baseline"}
    assert len(_rows(workdir / "ev" / "trace_baseline.csv")) == 365


def test_train_with_replay_and_parallel_seeds(workdir):
    assert main(["train", "--algo", "sac", "--steps", "300", "--eval-interval", "0",
                 "--inflow", "replay", "--replicates", "2", "--jobs", "2", "--seed", "5",
                 "--out-dir", "t"]) == 0
    manifest = json.loads((workdir / "t" / "manifest.json").read_text())
    assert manifest["seeds"] == [5, 6]
    assert (workdir / "t" / "seed_6" / "policy.json").exists()


def test_train_divergence_keeps_partial_curve(workdir):
    (workdir / "bad.cfg").write_text("learner.max_abs_q = 1e-12\n")
    rc = main(["train", "--algo", "td3", "--steps", "1200", "--eval-interval", "600",
               "--config", "bad.cfg", "--out-dir", "t"])
    assert rc == 1
    assert (workdir / "t" / "curve.csv").exists()
    assert not (workdir / "t" / "policy.json").exists()
    assert json.loads((workdir / "t" / "manifest.json").read_text())["status"] == "diverged"


def test_usage_errors_exit_2(workdir, capsys):
    assert main(["train", "--algo", "a2c"]) == 2
    assert main(["evaluate"]) == 2
    assert main(["bogus"]) == 2
    assert main([]) == 2
    assert main(["simulate", "--start-date", "June"]) == 2


def test_runtime_errors_exit_1(workdir, capsys):
    assert main(["evaluate", "--policies", "missing.json"]) == 1
    assert "missing.json" in capsys.readouterr().err
    (workdir / "bad.csv").write_text("date,rainfall_mm,water_level_m,inflow_bcm\n2019-01-01,-1,,\n")
    assert main(["simulate", "--data", "bad.csv"]) == 1
    assert "line 2" in capsys.readouterr().err
    assert main(["fit-inflow", "--train-end", "2019", "--test-year", "2019"]) == 1
    assert main(["simulate", "--config", "nope.cfg"]) == 1
    assert main(["train", "--algo", "td3", "--inflow", "nope.json"]) == 1


def test_simulate_trace(workdir):
    assert main(["simulate", "--policy", "baseline", "--seed", "7", "--out", "t.csv"]) == 0
    rows = _rows(workdir / "t.csv")
    assert len(rows) == 365
    assert rows[0]["date"] == "2019-06-01"
    assert all(abs(float(r["mass_balance_residual"])) <= 1e-9 for r in rows)
    assert main(["simulate", "--start-date", "2019-07-15", "--policy", "constant:200",
                 "--source", "bootstrap", "--out", "u.csv"]) == 0
    rows = _rows(workdir / "u.csv")
    assert rows[0]["date"] == "2019-07-15"
    assert {r["action_cumecs"] for r in rows} == {"200.0"}


def test_data_dir_fallback_and_rerun(workdir, monkeypatch, tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("data")
    monkeypatch.chdir(data_dir)
    assert main(["synthesize", "--out", "d.csv", "--years", "8"]) == 0
    monkeypatch.chdir(workdir)
    monkeypatch.setenv("REPO_DATA_DIR", str(data_dir))
    assert main(["simulate", "--data", "d.csv", "--out", "a.csv"]) == 0
    first = (workdir / "a.csv").read_bytes()
    (workdir / "a.csv").unlink()
    assert main(["rerun", "a.manifest.json"]) == 0
    assert (workdir / "a.csv").read_bytes() == first
