from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from nlh import __version__
from nlh.cli import main
from nlh.data import DiscreteTable, SurvivalSample, write_discrete_csv, write_sample_csv
from nlh.documents import SCHEMA_VERSION, read_curve_csv, read_curves_json
from nlh.models import weibull_model
from nlh.power import Censoring, FixedHazard, simulate_sample

FIT_KEYS = {"model", "parameters", "std_errors", "loglik", "n", "converged", "iterations", "grad_norm"}


@pytest.fixture
def weibull_csv(tmp_path):
    s = simulate_sample(FixedHazard(weibull_model(), (1.0, 1.5)), 150, 1, Censoring("exponential", 0.3))
    path = tmp_path / "w.csv"
    write_sample_csv(s, path)
    return path


@pytest.fixture
def cox_csv(tmp_path):
    rng = np.random.default_rng(2)
    z = rng.normal(size=(200, 1))
    t = rng.exponential(1.0 / np.exp(0.5 * z[:, 0]))
    path = tmp_path / "c.csv"
    write_sample_csv(SurvivalSample.from_arrays(t, np.ones(200, dtype=int), covariates=z), path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestFit:
    def test_json_to_stdout(self, capsys, weibull_csv):
        code, out, _ = run(capsys, "fit", "--model", "weibull", "--data", weibull_csv)
        assert code == 0
        doc = json.loads(out)
        assert FIT_KEYS <= set(doc)
        assert set(doc["parameters"]) == {"theta", "beta"}
        assert doc["std_errors"]["beta"] > 0

    def test_out_file_and_summary(self, capsys, tmp_path, weibull_csv):
        code, out, _ = run(capsys, "fit", "--model", "weibull", "--data", weibull_csv, "--out", tmp_path / "f.json")
        assert code == 0
        assert "approx sd" in out
        assert json.loads((tmp_path / "f.json").read_text())["model"] == "weibull"

    def test_fixed_parameter(self, capsys, weibull_csv):
        code, out, _ = run(capsys, "fit", "--model", "weibull", "--fix", "beta=1.5", "--data", weibull_csv)
        assert code == 0
        assert set(json.loads(out)["parameters"]) == {"theta"}

    def test_unknown_fixed_parameter(self, capsys, weibull_csv):
        code, _, err = run(capsys, "fit", "--model", "weibull", "--fix", "gamma=1", "--data", weibull_csv)
        assert code == 2
        assert "unknown parameter" in err

    def test_no_events_fails(self, capsys, tmp_path):
        path = tmp_path / "none.csv"
        path.write_text("time,status\n1.0,0\n2.0,0\n")
        code, _, err = run(capsys, "fit", "--data", path)
        assert code == 1
        assert "event" in err

    def test_malformed_csv_reports_line(self, capsys, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,status\n1.0,1\n2.0,x\n")
        code, _, err = run(capsys, "fit", "--data", path)
        assert code == 1
        assert "line 3" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "fit", "--data", tmp_path / "nope.csv")
        assert code == 2
        assert "no such file" in err

    def test_covariates_warned_and_ignored(self, capsys, cox_csv):
        code, _, err = run(capsys, "fit", "--data", cox_csv)
        assert code == 0
        assert "warning" in err and "covariate" in err


class TestCurve:
    def test_outputs(self, capsys, tmp_path, weibull_csv):
        code, out, _ = run(
            capsys,
            "curve",
            "--model",
            "exponential",
            "--type",
            "A,B",
            "--data",
            weibull_csv,
            "--svg",
            tmp_path / "o.svg",
            "--csv",
            tmp_path / "o.csv",
            "--json",
            tmp_path / "o.json",
        )
        assert code == 0
        assert "Type A" in out and "Type B" in out
        svg = (tmp_path / "o.svg").read_text()
        assert svg.count('class="band"') == 2
        assert read_curve_csv(tmp_path / "o_A.csv").metadata["plot"] == "A"
        docs, fit = read_curves_json(tmp_path / "o.json")
        assert [d.metadata["plot"] for d in docs] == ["A", "B"]
        assert FIT_KEYS <= set(fit)

    def test_svg_is_deterministic(self, capsys, tmp_path, weibull_csv):
        for name in ("a.svg", "b.svg"):
            run(capsys, "curve", "--data", weibull_csv, "--svg", tmp_path / name)
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_type_c_needs_weight(self, capsys, weibull_csv):
        code, _, err = run(capsys, "curve", "--type", "C", "--data", weibull_csv)
        assert code == 2
        assert "--weight" in err

    def test_type_c_log_weight(self, capsys, tmp_path, weibull_csv):
        code, _, _ = run(capsys, "curve", "--type", "C", "--weight", "log", "--data", weibull_csv, "--out", tmp_path / "c.json")
        assert code == 0
        assert read_curves_json(tmp_path / "c.json")[0][0].metadata["plot"] == "C"

    def test_window(self, capsys, tmp_path, weibull_csv):
        code, _, _ = run(capsys, "curve", "--model", "weibull", "--window", "0.2,1.0", "--data", weibull_csv, "--out", tmp_path / "w.json")
        assert code == 0
        doc = read_curves_json(tmp_path / "w.json")[0][0]
        assert doc.metadata["window"] == [0.2, 1.0]
        assert doc.t.min() > 0.2

    def test_bad_window(self, capsys, weibull_csv):
        code, _, _ = run(capsys, "curve", "--window", "1,0.5", "--data", weibull_csv)
        assert code == 2

    def test_auxiliary_plots(self, capsys, tmp_path, weibull_csv):
        code, _, _ = run(capsys, "curve", "--data", weibull_csv, "--na-svg", tmp_path / "na.svg", "--hazard-svg", tmp_path / "h.svg")
        assert code == 0
        assert "Nelson-Aalen" in (tmp_path / "na.svg").read_text()
        assert "kernel estimate" in (tmp_path / "h.svg").read_text()

    def test_band_level_must_be_positive(self, capsys, weibull_csv):
        with pytest.raises(SystemExit) as info:
            main(["curve", "--data", str(weibull_csv), "--band-level", "0"])
        assert info.value.code == 2


class TestCox:
    def test_fit_and_curves(self, capsys, tmp_path, cox_csv):
        code, out, _ = run(capsys, "cox", "--data", cox_csv, "--json", tmp_path / "c.json")
        assert code == 0
        assert "beta1" in out
        docs, fit = read_curves_json(tmp_path / "c.json")
        assert len(docs) == 2
        assert abs(fit["parameters"]["beta1"] - 0.5) < 0.3

    def test_needs_covariates(self, capsys, weibull_csv):
        code, _, _ = run(capsys, "cox", "--data", weibull_csv)
        assert code == 2

    def test_non_convergence_exit_code(self, capsys, tmp_path):
        path = tmp_path / "sep.csv"
        write_sample_csv(
            SurvivalSample.from_arrays([1.0, 2.0, 1.5, 2.5], [1, 1, 0, 0], covariates=[[1.0], [1.0], [0.0], [0.0]]), path
        )
        code, _, err = run(capsys, "cox", "--data", path)
        assert code == 3
        assert "did not converge" in err


class TestDiscrete:
    def test_constant(self, capsys, tmp_path):
        path = tmp_path / "d.csv"
        write_discrete_csv(DiscreteTable.from_arrays([0, 1, 2], [1, 2, 3], [10, 8, 5], [2, 3, 1]), path)
        code, out, _ = run(capsys, "discrete", "--data", path, "--plot", "curveB,delta", "--delta-svg", tmp_path / "d.svg")
        assert code == 0
        assert "0.26087" in out
        assert "interval residuals" in out
        assert (tmp_path / "d.svg").exists()

    def test_bad_plot(self, capsys, tmp_path):
        path = tmp_path / "d.csv"
        write_discrete_csv(DiscreteTable.from_arrays([0], [1], [10], [2]), path)
        code, _, _ = run(capsys, "discrete", "--data", path, "--plot", "pie")
        assert code == 2


class TestPowerAndSimulate:
    @pytest.fixture
    def scenario(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"n": 40, "truth": {"kind": "exponential", "rate": 1.0}, "censoring": {"kind": "exponential", "rate": 1.0}}))
        return path

    def test_power_json(self, capsys, tmp_path, scenario):
        code, _, _ = run(capsys, "power", "--scenario", scenario, "--reps", 8, "--seed", 3, "--probes", "median,0.5", "--out", tmp_path / "p.json")
        assert code == 0
        doc = json.loads((tmp_path / "p.json").read_text())
        assert {"schema_version", "software_version", "seed", "model", "scenario", "summary", "predictions"} <= set(doc)
        assert doc["summary"]["reps"] == 8
        assert {"exceed", "band_exceed", "mean", "se"} <= set(doc["summary"])

    def test_seed_from_environment(self, capsys, tmp_path, scenario, monkeypatch):
        monkeypatch.setenv("NLH_SEED", "11")
        run(capsys, "power", "--scenario", scenario, "--reps", 4, "--no-predict", "--out", tmp_path / "a.json")
        run(capsys, "power", "--scenario", scenario, "--reps", 4, "--no-predict", "--seed", 11, "--out", tmp_path / "b.json")
        a, b = (json.loads((tmp_path / f).read_text()) for f in ("a.json", "b.json"))
        assert a["seed"] == 11
        assert a == b

    def test_bad_seed_environment(self, capsys, scenario, monkeypatch):
        monkeypatch.setenv("NLH_SEED", "abc")
        code, _, _ = run(capsys, "power", "--scenario", scenario, "--reps", 2)
        assert code == 2

    def test_simulate(self, capsys, tmp_path, scenario):
        code, out, _ = run(capsys, "simulate", "--scenario", scenario, "--n", 25, "--seed", 1, "--out", tmp_path / "x.csv")
        assert code == 0
        assert "25 subjects" in out
        assert len((tmp_path / "x.csv").read_text().splitlines()) == 26


class TestBand:
    def test_exceedance(self, capsys):
        code, out, _ = run(capsys, "band", "--m", 1.96)
        assert code == 0
        assert abs(json.loads(out)["exceedance"] - 0.49) < 0.01

    def test_threshold(self, capsys):
        _, out, _ = run(capsys, "band", "--level", 0.05)
        assert abs(json.loads(out)["threshold"] - 3.05) < 0.01

    def test_early(self, capsys):
        _, out, _ = run(capsys, "band", "--early", 2)
        assert abs(json.loads(out)["early"]["1"] - 0.165) < 0.001

    def test_nothing_requested(self, capsys):
        code, _, _ = run(capsys, "band")
        assert code == 2


def test_version():
    out = subprocess.run([sys.executable, "-m", "nlh.cli", "--version"], capture_output=True, text=True, check=True)
    assert __version__ in out.stdout
    assert f"schema {SCHEMA_VERSION}" in out.stdout
