import json
import os

import pytest

from crbayes.cli import main
from crbayes.data import load_history, store_history, simulate_m0
from crbayes.data import CaptureHistory


def run(argv):
    return main(argv)


@pytest.fixture
def m0_dataset(tmp_path):
    path = tmp_path / "informative.json"
    store_history(simulate_m0(60, 0.4, 5, seed=11), path)
    return path


@pytest.fixture
def r0_dataset(tmp_path):
    rows = tuple(tuple(1 if j == i % 3 else 0 for j in range(3)) for i in range(6))
    path = tmp_path / "single-captures.json"
    store_history(CaptureHistory(k=3, rows=rows), path)
    return path


class TestSimulate:
    def test_writes_dataset_and_manifest(self, tmp_path, capsys):
        out = tmp_path / "d.json"
        rc = run(["simulate", "--model", "m0", "--n", "100", "--p", "0.3",
                  "--k", "5", "--seed", "7", "--out", str(out)])
        assert rc == 0
        history = load_history(out)
        assert history.k == 5
        manifest = json.loads((tmp_path / "d.json.manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 7
        assert manifest["input_digest"]
        assert "observed histories" in capsys.readouterr().out

    def test_same_flags_give_byte_identical_dataset(self, tmp_path):
        args = ["simulate", "--model", "mh", "--n", "50", "--alpha", "2", "--beta", "3",
                "--k", "4", "--seed", "3"]
        run(args + ["--out", str(tmp_path / "a.json")])
        run(args + ["--out", str(tmp_path / "b.json")])
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_invalid_probability_is_usage_error(self, tmp_path, capsys):
        rc = run(["simulate", "--model", "m0", "--n", "10", "--p", "1.3",
                  "--k", "2", "--seed", "1", "--out", str(tmp_path / "x.json")])
        assert rc == 2
        assert "probability" in capsys.readouterr().err

    def test_missing_model_parameters_is_usage_error(self, tmp_path, capsys):
        rc = run(["simulate", "--model", "mh", "--n", "10", "--k", "2",
                  "--seed", "1", "--out", str(tmp_path / "x.json")])
        assert rc == 2

    def test_csv_output(self, tmp_path):
        out = tmp_path / "d.csv"
        rc = run(["simulate", "--model", "m0", "--n", "30", "--p", "0.5",
                  "--k", "3", "--seed", "2", "--out", str(out), "--format", "csv"])
        assert rc == 0
        assert load_history(out).k == 3


class TestAnalyze:
    def test_m0_proper_analysis(self, m0_dataset, tmp_path, capsys):
        out = tmp_path / "post"
        rc = run(["analyze", "--data", str(m0_dataset), "--model", "m0",
                  "--n-prior", "uniform", "--n-max", "2000", "--out", str(out)])
        assert rc == 0
        payload = json.loads((tmp_path / "post.json").read_text())
        for key in ("support", "mass", "mean", "sd", "ci", "tail_mass_estimate", "warnings"):
            assert key in payload
        assert payload["warnings"] == []
        assert (tmp_path / "post.csv").exists()
        assert (tmp_path / "post.json.manifest.json").exists()
        assert "mean" in capsys.readouterr().out

    def test_m0_no_recaptures_flags_impropriety(self, r0_dataset, tmp_path, capsys):
        rc = run(["analyze", "--data", str(r0_dataset), "--model", "m0",
                  "--n-prior", "uniform", "--n-max", "20000",
                  "--out", str(tmp_path / "bad")])
        assert rc == 3
        assert "improper" in capsys.readouterr().err.lower()

    def test_m0_scale_prior_rescues_no_recaptures(self, r0_dataset, tmp_path):
        rc = run(["analyze", "--data", str(r0_dataset), "--model", "m0",
                  "--n-prior", "scale", "--n-max", "20000",
                  "--out", str(tmp_path / "ok")])
        assert rc == 0

    def test_mh_report_includes_quadrature_diagnostic(self, tmp_path, capsys):
        path = tmp_path / "small.json"
        store_history(CaptureHistory(k=3, rows=((1, 0, 0), (1, 1, 0), (0, 1, 1))), path)
        rc = run(["analyze", "--data", str(path), "--model", "mh",
                  "--shape-a", "2", "--shape-b", "2", "--n-max", "120",
                  "--out", str(tmp_path / "mh")])
        assert rc == 0
        payload = json.loads((tmp_path / "mh.json").read_text())
        assert payload["quadrature"]["max_rel_change"] is not None
        assert "quadrature" in capsys.readouterr().out

    def test_mh_unconverged_quadrature_is_numeric_failure(self, tmp_path, capsys):
        path = tmp_path / "small.json"
        store_history(CaptureHistory(k=3, rows=((1, 0, 0), (1, 1, 0), (0, 1, 1))), path)
        rc = run(["analyze", "--data", str(path), "--model", "mh",
                  "--n-max", "200", "--nodes", "8", "--check-nodes", "12",
                  "--quad-rtol", "1e-10", "--out", str(tmp_path / "mh")])
        assert rc == 5
        assert "quadrature" in capsys.readouterr().err

    def test_missing_file_is_usage_error(self, tmp_path, capsys):
        rc = run(["analyze", "--data", str(tmp_path / "nope.json"), "--model", "m0",
                  "--out", str(tmp_path / "o")])
        assert rc == 2


class TestCheckPropriety:
    def test_three_scenarios_match_theory(self, m0_dataset, r0_dataset, tmp_path):
        rc = run(["check-propriety", "--model", "m0", "--data", str(m0_dataset),
                  "--a", "1", "--b", "1", "--out", str(tmp_path / "p1")])
        assert rc == 0
        assert json.loads((tmp_path / "p1.json").read_text())["predicted"] == "proper"

        rc = run(["check-propriety", "--model", "m0", "--data", str(r0_dataset),
                  "--a", "1", "--b", "1", "--out", str(tmp_path / "p2")])
        assert rc == 0  # improper, and the fit agrees with the prediction
        report = json.loads((tmp_path / "p2.json").read_text())
        assert report["predicted"] == "improper"
        assert report["agreement"] is True

        rc = run(["check-propriety", "--model", "ym", "--n", "4", "--k", "6",
                  "--delta", "0.2", "--out", str(tmp_path / "p3")])
        assert rc == 0
        report = json.loads((tmp_path / "p3.json").read_text())
        assert report["predicted"] == "improper"  # boundary case of the iff condition

    def test_synthetic_power_law_mode(self, tmp_path, capsys):
        rc = run(["check-propriety", "--synthetic-exponent", "2",
                  "--out", str(tmp_path / "syn")])
        assert rc == 0
        payload = json.loads((tmp_path / "syn.json").read_text())
        assert abs(payload["fitted_exponent"] - 2.0) < 1e-8
        assert (tmp_path / "syn.csv").exists()

    def test_mh_sufficiency_gap_reported(self, tmp_path):
        path = tmp_path / "small.json"
        store_history(CaptureHistory(k=3, rows=((1, 0, 0), (1, 1, 0))), path)
        rc = run(["check-propriety", "--model", "mh", "--data", str(path),
                  "--shape-a", "0.5", "--shape-b", "1", "--fit-points", "20",
                  "--out", str(tmp_path / "mh")])
        assert rc == 0
        assert json.loads((tmp_path / "mh.json").read_text())["predicted"] == "not_guaranteed"

    def test_disagreement_exit_code(self, m0_dataset, tmp_path):
        rc = run(["check-propriety", "--model", "m0", "--data", str(m0_dataset),
                  "--tolerance", "1e-12", "--out", str(tmp_path / "dis")])
        assert rc == 4

    def test_model_or_synthetic_required(self, tmp_path, capsys):
        rc = run(["check-propriety", "--out", str(tmp_path / "x")])
        assert rc == 2


class TestDaSweep:
    def test_sweep_outputs(self, m0_dataset, tmp_path, capsys):
        rc = run(["da-sweep", "--data", str(m0_dataset), "--m", "150,300",
                  "--iters", "4000", "--burnin", "400", "--seed", "5",
                  "--out", str(tmp_path / "sweep")])
        assert rc == 0
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "M,mean_N,sd_N,ess"
        assert len(lines) == 3
        payload = json.loads((tmp_path / "sweep.json").read_text())
        assert "slope" in payload and "stable" in payload
        assert "slope of mean vs M" in capsys.readouterr().out

    def test_bad_m_list(self, m0_dataset, tmp_path, capsys):
        rc = run(["da-sweep", "--data", str(m0_dataset), "--m", "10,x",
                  "--out", str(tmp_path / "s")])
        assert rc == 2


class TestYm:
    def test_proper_configuration(self, tmp_path, capsys):
        rc = run(["ym", "--n", "4", "--k", "6", "--delta", "0.25",
                  "--prior", "uniform", "--n-max", "50000",
                  "--out", str(tmp_path / "ym1")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "proper" in out
        payload = json.loads((tmp_path / "ym1.json").read_text())
        assert payload["verdict"] == "proper"
        assert abs(payload["propriety"]["fitted_exponent"] - 1.25) < 0.02

    def test_boundary_is_improper(self, tmp_path):
        rc = run(["ym", "--n", "4", "--k", "6", "--delta", "0.2",
                  "--prior", "uniform", "--n-max", "50000",
                  "--out", str(tmp_path / "ym2")])
        assert rc == 3
        assert json.loads((tmp_path / "ym2.json").read_text())["verdict"] == "improper"

    def test_scale_prior_always_proper(self, tmp_path):
        rc = run(["ym", "--n", "4", "--k", "6", "--delta", "0.05",
                  "--prior", "scale", "--n-max", "50000",
                  "--out", str(tmp_path / "ym3")])
        assert rc == 0
        assert json.loads((tmp_path / "ym3.json").read_text())["verdict"] == "proper"


def test_version_flag(capsys):
    assert run(["--version"]) == 0
    assert "crbayes" in capsys.readouterr().out


def test_thread_env_configures_blas_pools(monkeypatch):
    from crbayes.cli import _configure_threads

    monkeypatch.setenv("CRBAYES_THREADS", "2")
    monkeypatch.delenv("OMP_NUM_THREADS", raising=False)
    _configure_threads()
    assert os.environ["OMP_NUM_THREADS"] == "2"
