import json

import pytest

from app.api.schemas import FastForwardRow, GroundStateReport, SearchSummary, VerificationReport
from app.main import main
from app.services.report_service import load_records


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_no_arguments_prints_help(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_a_usage_error(capsys):
    assert main(["search", "--bogus"]) == 2
    assert error_of(capsys)["error"] == "UsageError"


def test_unknown_subcommand(capsys):
    assert main(["teleport"]) == 2
    assert error_of(capsys)["error"] == "UsageError"


def test_stochastic_subcommand_needs_seed(capsys):
    assert main(["search", "--graph", "complete:4"]) == 2
    error = error_of(capsys)
    assert error["error"] == "ConfigError"
    assert "seed" in error["message"]


def test_infeasible_size_exits_with_one(capsys):
    assert main(["search", "--graph", "complete:61", "--seed", "1"]) == 1
    assert error_of(capsys)["error"] == "InfeasibleSizeError"


def test_unknown_tolerance_is_rejected(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"tolerances": {"NOT_A_SETTING": 1.0}}))
    assert main(["verify", "--lemma", "ct-dt", "--graph", "cycle:6", "--seed", "1", "--config", str(config)]) == 2
    assert error_of(capsys)["error"] == "ConfigError"


def test_search_writes_csv_and_provenance(tmp_path):
    first = tmp_path / "first.csv"
    second = tmp_path / "second.csv"
    argv = ["search", "--graph", "complete:4", "--seed", "7", "--trials", "6"]
    assert main(argv + ["--output", str(first)]) == 0
    assert main(argv + ["--output", str(second), "--workers", "2"]) == 0

    assert first.read_bytes() == second.read_bytes()
    header, row = first.read_text().strip().splitlines()
    assert header.split(",") == list(SearchSummary.model_fields)
    assert row.startswith("complete:4,4,")

    provenance = json.loads((tmp_path / "first.csv.provenance.json").read_text())
    assert provenance["seed"] == 7
    assert provenance["subcommand"] == "search"
    assert provenance == json.loads((tmp_path / "second.csv.provenance.json").read_text())


def test_config_file_values_yield_to_flags(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"graph": "complete:4", "seed": 5, "trials": 3, "format": "json"}))
    assert main(["search", "--config", str(config), "--trials", "2"]) == 0
    (summary,) = load_records(capsys.readouterr().out, SearchSummary)
    assert summary.trials == 2
    assert summary.seed == 5


def test_verify_ct_dt_on_cycle(capsys):
    assert main(["verify", "--lemma", "ct-dt", "--graph", "cycle:6", "--seed", "1", "--T", "5", "--format", "json"]) == 0
    (report,) = load_records(capsys.readouterr().out, VerificationReport)
    assert report.lemma == "ct-dt"
    assert report.verdict == "pass"
    assert report.instance["edges"] == 6
    assert report.instance["spectral_gap"] > 0.0


def test_verify_square_relation_verdict_follows_residual(monkeypatch, capsys):
    argv = ["verify", "--lemma", "square-relation", "--graph", "cycle:5", "--seed", "1", "--trials", "4", "--format", "json"]
    assert main(argv) == 0
    (report,) = load_records(capsys.readouterr().out, VerificationReport)
    assert report.verdict == "pass"
    assert report.lhs <= report.rhs

    monkeypatch.setattr("app.api.commands.verify_square_relation", lambda *args, **kwargs: 1.0)
    assert main(argv) == 0
    (report,) = load_records(capsys.readouterr().out, VerificationReport)
    assert report.verdict == "fail"
    assert report.margin < 0.0


def test_verify_rejects_fractional_horizon(capsys):
    assert main(["verify", "--lemma", "lazy-square", "--graph", "cycle:6", "--seed", "1", "--T", "2.5"]) == 2


def test_verify_success_probability_suite(capsys):
    argv = ["verify", "--lemma", "success-prob", "--graph", "cycle:6", "--seed", "3", "--trials", "5", "--format", "json"]
    assert main(argv) == 0
    reports = load_records(capsys.readouterr().out, VerificationReport)
    assert len(reports) == 5
    assert all(r.verdict == "pass" for r in reports)


def test_fastforward_rows(capsys):
    argv = ["fastforward", "--graph", "complete:4", "--times", "1,5", "--s", "0.5", "--format", "json"]
    assert main(argv) == 0
    rows = load_records(capsys.readouterr().out, FastForwardRow)
    assert [row.t for row in rows] == [1.0, 5.0]
    for row in rows:
        assert row.exact_probability >= row.fast_forward_bound - 1e-9


def test_groundstate_random_batch(capsys):
    argv = ["groundstate", "--hamiltonian", "random:3", "--seed", "2", "--trials", "2", "--format", "json"]
    assert main(argv) == 0
    reports = load_records(capsys.readouterr().out, GroundStateReport)
    assert len(reports) == 2
    assert all(r.achieved_error <= r.epsilon for r in reports)


def test_groundstate_from_matrix_file(tmp_path, capsys):
    document = tmp_path / "h.json"
    document.write_text(json.dumps({"matrix": [[0.0, 0.0], [0.0, 1.0]], "psi0": [0.6, 0.8]}))
    argv = ["groundstate", "--hamiltonian", str(document), "--seed", "0", "--format", "json", "--epsilon", "0.01"]
    assert main(argv) == 0
    (report,) = load_records(capsys.readouterr().out, GroundStateReport)
    assert report.eta == pytest.approx(0.6)
    assert report.achieved_error <= 0.01


def test_scaling_csv(capsys):
    assert main(["scaling", "--family", "complete", "--sizes", "4,8", "--seed", "0"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    assert lines[1].startswith("complete,4,")
