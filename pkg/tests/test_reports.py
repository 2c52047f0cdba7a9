import math

import pytest

from app.api.schemas import ExperimentConfig, ScalingRow, VerificationReport
from app.config import apply_overrides
from app.services.report_service import (
    config_hash,
    emit,
    format_float,
    load_records,
    render,
    resolve_output,
    to_json_text,
    write_provenance,
)


def report(**overrides):
    values = {"lemma": "ct-dt", "instance": {"n": 6}, "lhs": 0.1, "rhs": 1 / 3, "margin": -0.2, "verdict": "fail"}
    values.update(overrides)
    return VerificationReport(**values)


@pytest.mark.parametrize(
    "value, text",
    [(1.0, "1.0"), (0.1, "0.10000000000000001"), (float("nan"), "NaN"), (-math.inf, "-Infinity"), (0.5, "0.5")],
)
def test_format_float(value, text):
    assert format_float(value) == text


def test_json_text_keeps_full_precision():
    assert to_json_text({"x": 1 / 3, "ok": True, "m": [1, 2], "s": None}) == (
        '{"x":0.33333333333333331,"ok":true,"m":[1,2],"s":null}'
    )
    with pytest.raises(TypeError):
        to_json_text(object())


def test_empty_csv_is_header_only():
    assert emit([], "csv", model=ScalingRow) == ",".join(ScalingRow.model_fields) + "\n"
    with pytest.raises(ValueError):
        render([], "csv")


def test_json_records_load_back():
    records = [report(), report(lhs=float("inf"), verdict="pass")]
    loaded = load_records(render(records, "json"), VerificationReport)
    assert loaded[0] == records[0]
    assert math.isinf(loaded[1].lhs)


def test_mixed_records_are_rejected():
    row = ScalingRow(family="cycle", n=4, HT=1.0, T=3.0, s_grid_size=4, bound_mean=0.1, quantum_time=1.0, classical_time=1.0, seed=0)
    with pytest.raises(ValueError, match="homogeneous"):
        render([report(), row])
    with pytest.raises(ValueError):
        render([row], "xml")


def test_bare_names_go_to_output_dir(tmp_path):
    apply_overrides({"OUTPUT_DIR": str(tmp_path / "results")})
    assert resolve_output("run.csv") == tmp_path / "results" / "run.csv"
    emit([report()], "csv", "run.csv")
    assert (tmp_path / "results" / "run.csv").exists()


def test_overrides_accept_only_known_settings():
    with pytest.raises(ValueError, match="Unknown settings"):
        apply_overrides({"DEBUG": True})
    apply_overrides({"SQUARE_RELATION_TOL": 1e-8})


def test_config_hash_ignores_output_and_workers(tmp_path):
    base = ExperimentConfig(subcommand="search", graph="complete:4", seed=1)
    moved = base.model_copy(update={"output": "elsewhere.csv", "workers": 4})
    assert config_hash(base) == config_hash(moved)
    assert config_hash(base) != config_hash(base.model_copy(update={"seed": 2}))
    sidecar = write_provenance(base, str(tmp_path / "out.csv"))
    assert sidecar.name == "out.csv.provenance.json"
