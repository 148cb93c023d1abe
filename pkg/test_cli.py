"""End-to-end runs of the command line on small generated files."""

import io
import json

import pandas as pd
import pytest

from main import main
from pipeline.ingest import write_panel
from simulation.exact import simulate_exact


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"family": "BR", "structure": "iso",
                                "params": {"q": 0.01, "alpha0": 1.0, "nugget": 0.1}}))
    return path


@pytest.fixture
def data_files(tmp_path, line_sites, br_iso_spec):
    panel = simulate_exact(line_sites, br_iso_spec, 30, seed=12)
    panel_csv = tmp_path / "panel.csv"
    sites_csv = tmp_path / "sites.csv"
    write_panel(panel, line_sites, panel_csv, sites_csv)
    return panel_csv, sites_csv


def read_table(text):
    return pd.read_csv(io.StringIO(text))


def test_check(model_file, capsys):
    assert main(["check", "--model", str(model_file), "--trials", "20", "--seed", "1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["kind"] == "cnd"
    assert report["passed"] is True
    assert report["n_trials"] == 20


def test_margins(data_files, capsys):
    panel_csv, sites_csv = data_files
    assert main(["margins", "--panel", str(panel_csv), "--sites", str(sites_csv)]) == 0
    table = read_table(capsys.readouterr().out)
    assert list(table.columns) == ["site_id", "xi", "mu", "sigma"]
    assert table["site_id"].tolist() == ["A", "B", "C", "D", "E"]
    assert (table["sigma"] > 0).all()


def test_fit_with_tic(data_files, model_file, capsys):
    panel_csv, sites_csv = data_files
    code = main(["fit", "--panel", str(panel_csv), "--sites", str(sites_csv), "--model", str(model_file),
                 "--tic", "--allow-pinv"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["model"] == "BR-iso"
    assert report["free_names"] == ["q", "alpha0", "nugget"]
    assert report["stage_trace"][0]["stage"] == "start"
    assert report["hessian"] is not None or not report["converged"]


def test_diagnose(data_files, model_file, tmp_path):
    panel_csv, sites_csv = data_files
    out = tmp_path / "theta.csv"
    assert main(["diagnose", "--panel", str(panel_csv), "--sites", str(sites_csv),
                 "--models", str(model_file), "--out", str(out)]) == 0
    table = pd.read_csv(out)
    assert len(table) == 10
    assert "theta_BR-iso" in table.columns


def test_simulate_to_files(model_file, data_files, tmp_path):
    _, sites_csv = data_files
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--model", str(model_file), "--sites", str(sites_csv),
                 "--reps", "4", "--seed", "1", "--out", str(out)]) == 0
    panel = pd.read_csv(out)
    assert list(panel.columns) == ["year", "A", "B", "C", "D", "E"]
    assert len(panel) == 4
    assert (tmp_path / "sim_sites.csv").exists()


def test_simulate_single_field_to_stdout(model_file, data_files, capsys):
    _, sites_csv = data_files
    assert main(["simulate", "--model", str(model_file), "--sites", str(sites_csv), "--seed", "2"]) == 0
    table = read_table(capsys.readouterr().out)
    assert list(table.columns) == ["year", "A", "B", "C", "D", "E"]
    assert len(table) == 1


def test_single_year_panel_file_is_refused(model_file, data_files, tmp_path):
    _, sites_csv = data_files
    assert main(["simulate", "--model", str(model_file), "--sites", str(sites_csv),
                 "--reps", "1", "--out", str(tmp_path / "one.csv")]) == 1


def test_simulate_grid(model_file, capsys):
    assert main(["simulate", "--model", str(model_file), "--grid", "0,20,0,20,2,2", "--seed", "3"]) == 0
    table = read_table(capsys.readouterr().out)
    assert len(table) == 4
    assert (table["z"] > 0).all()


def test_simulate_needs_a_target(model_file):
    assert main(["simulate", "--model", str(model_file)]) == 1


def test_bad_grid(model_file):
    assert main(["simulate", "--model", str(model_file), "--grid", "0,20,0,20,2"]) == 1


def test_missing_panel_file(data_files, tmp_path):
    _, sites_csv = data_files
    assert main(["margins", "--panel", str(tmp_path / "nope.csv"), "--sites", str(sites_csv)]) == 1


def test_missing_model_file(tmp_path):
    assert main(["check", "--model", str(tmp_path / "nope.json")]) == 1


def test_regimes(capsys):
    assert main(["regimes", "--which", "thm52", "--n", "20000", "--seed", "1"]) == 0
    table = read_table(capsys.readouterr().out)
    assert list(table.columns) == ["regime", "p", "chi_hat", "n_exceed", "n", "verdict"]
    assert table["regime"].unique().tolist() == ["thm52"]


def test_unknown_regime_is_rejected_by_the_parser():
    with pytest.raises(SystemExit):
        main(["regimes", "--which", "thm99"])
