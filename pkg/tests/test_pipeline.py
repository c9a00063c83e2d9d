import csv
import json
from pathlib import Path

import pytest

from conftest import MA1_CAPACITY
from fbcap import pipeline
from fbcap.config import load_config, parse_config
from fbcap.pipeline import (
    PipelineError,
    build_convergence_csv,
    build_convergence_markdown,
    build_impulse_csv,
    run_pipeline,
    write_outputs,
)
from fbcap.reference import compare_to_reference, load_json

ROOT = Path(__file__).resolve().parents[1]
BENCHMARKS = ROOT / "benchmarks"

SMALL = {"channel": {"num": [1.0, 0.1]}, "power": 10.0, "m": 12, "h_max": 2}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    return run_pipeline(parse_config(SMALL), output_dir=out), out


def test_run_pipeline_writes_all_outputs(small_run):
    report, out = small_run
    assert report["status"] == "ok" and report["error"] is None
    for name in ("report.json", "convergence.csv", "convergence.md", "impulse.csv", "scheme.json"):
        assert (out / name).exists()
    assert not list(out.glob("*.tmp"))


def test_run_pipeline_report_contents(small_run):
    report, _ = small_run
    capacity = report["capacity_bits"]
    assert capacity["gap"] == capacity["upper"] - capacity["lower"]
    assert capacity["lower"] <= capacity["upper"] + 1e-9
    assert capacity["upper"] >= MA1_CAPACITY - 5e-3
    assert capacity["lower"] <= MA1_CAPACITY + 5e-3
    assert report["nonfeedback_bits"]["half_bit_consistent"] is True
    assert report["filter"]["m"] == 12
    assert report["filter"]["power"] == pytest.approx(10.0, abs=1e-9)
    assert report["scheme"]["internally_stable"] is True
    assert report["scheme"]["controller_order"] == 12
    assert report["scheme"]["rate_bits"] == pytest.approx(report["filter"]["rate_bits"], abs=1e-6)
    assert report["duality"]["primal_bits"] == pytest.approx(report["duality"]["dual_bits"], abs=1e-6)
    assert "reduced_controller" not in report and "transmission" not in report


def test_persisted_report_matches_returned(small_run):
    report, out = small_run
    assert json.loads((out / "report.json").read_text(encoding="utf-8")) == report


def test_convergence_csv_layout(small_run):
    report, out = small_run
    with open(out / "convergence.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == ["h", "upper_bits", "lower_bits", "gap_bits"]
    assert [int(row["h"]) for row in rows] == [1, 2]
    assert float(rows[1]["upper_bits"]) == report["convergence"][1]["upper_bits"]


def test_impulse_csv_lists_every_coefficient(small_run):
    report, out = small_run
    lines = (out / "impulse.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "n,c_n"
    assert len(lines) == 1 + report["filter"]["m"]
    assert float(lines[1].split(",")[1]) == report["filter"]["coeffs"][0]


def test_scheme_json_holds_controller_and_split(small_run):
    _, out = small_run
    scheme = json.loads((out / "scheme.json").read_text(encoding="utf-8"))
    assert set(scheme) == {"controller", "split"}
    assert len(scheme["controller"]["A"]) == 12
    assert scheme["split"]["message_dim"] == len(scheme["split"]["Au"])


def test_run_pipeline_is_byte_reproducible(small_run, tmp_path):
    _, first = small_run
    run_pipeline(parse_config(SMALL), output_dir=tmp_path, threads=2)
    for name in ("report.json", "convergence.csv", "impulse.csv", "scheme.json"):
        assert (tmp_path / name).read_bytes() == (first / name).read_bytes()


def test_run_pipeline_uses_env_output_dir(monkeypatch, tmp_path):
    monkeypatch.setenv("FBCAP_OUTPUT_DIR", str(tmp_path / "from-env"))
    run_pipeline(parse_config({**SMALL, "m": 6, "h_max": 1}))
    assert (tmp_path / "from-env" / "report.json").exists()


def test_run_pipeline_writes_partial_report_on_failure(monkeypatch, tmp_path):
    def broken(*args, **kwargs):
        raise ValueError("degenerate filter, no rate")

    monkeypatch.setattr(pipeline, "synthesize", broken)
    with pytest.raises(PipelineError):
        run_pipeline(parse_config(SMALL), output_dir=tmp_path)

    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["status"] == "incomplete"
    assert report["error"].startswith("PipelineError:")
    assert all(row["upper_bits"] is not None for row in report["convergence"])
    assert all("degenerate filter" in row["error"] for row in report["convergence"])
    assert not (tmp_path / "impulse.csv").exists()
    assert "Error: PipelineError" in (tmp_path / "convergence.md").read_text(encoding="utf-8")


def test_run_pipeline_flat_channel_reports_capacity_without_scheme(tmp_path):
    config = parse_config({"channel": {"num": [1.0]}, "power": 1.0, "m": 8, "h_max": 1})
    report = run_pipeline(config, output_dir=tmp_path)
    assert report["status"] == "ok"
    capacity = report["capacity_bits"]
    assert capacity["upper"] == pytest.approx(0.5, abs=1e-5)
    assert capacity["lower"] == report["nonfeedback_bits"]["capacity"]
    assert capacity["lower"] == pytest.approx(0.5, abs=1e-9)
    assert pipeline.FLAT_SCHEME_WARNING in report["warnings"]
    assert "filter" not in report and "scheme" not in report
    assert not (tmp_path / "impulse.csv").exists()
    assert not (tmp_path / "scheme.json").exists()
    assert (tmp_path / "report.json").exists()


def test_run_pipeline_fails_when_solver_never_converges(tmp_path):
    config = parse_config({**SMALL, "solver": {"max_iter": 1}})
    with pytest.raises(PipelineError, match="no h in 1..2"):
        run_pipeline(config, output_dir=tmp_path)
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert [row["error"] is not None for row in report["convergence"]] == [True, True]


def test_write_outputs_for_empty_report(tmp_path):
    paths = write_outputs({"status": "incomplete", "error": "ValueError: boom"}, tmp_path / "nested")
    assert set(paths) == {"report", "convergence", "convergence_md"}
    assert (tmp_path / "nested" / "convergence.csv").read_text(encoding="utf-8") == "h,upper_bits,lower_bits,gap_bits\n"
    assert "no rows" in (tmp_path / "nested" / "convergence.md").read_text(encoding="utf-8")


def test_build_convergence_csv_leaves_missing_values_empty():
    text = build_convergence_csv([{"h": 1, "upper_bits": 1.5, "lower_bits": None, "gap_bits": None}])
    assert text.splitlines()[1] == "1,1.5,,"


def test_build_impulse_csv_numbers_from_one():
    assert build_impulse_csv([0.5, -0.25]) == "n,c_n\n1,0.5\n2,-0.25\n"


def test_build_convergence_markdown_marks_failed_rows():
    report = {
        "status": "ok",
        "config": {"channel": {"num": [1.0], "den": [1.0]}, "power": 1.0, "m": 4, "h_max": 1},
        "convergence": [{"h": 1, "upper_bits": None, "lower_bits": None, "gap_bits": None, "error": "did not converge"}],
    }
    text = build_convergence_markdown(report)
    assert text.startswith("# Feedback Capacity Bounds\n")
    assert "| 1 | n/a | n/a | n/a | did not converge |" in text


@pytest.mark.slow
def test_ma2_benchmark_reproduces_published_table(tmp_path):
    report = run_pipeline(load_config(BENCHMARKS / "channel_ma2.json"), output_dir=tmp_path)
    assert compare_to_reference(report, load_json(BENCHMARKS / "reference.ma2.json")) == []
    assert report["reduced_controller"]["order"] == 4
    assert report["transmission"]["decode_error_rate"] <= 0.01
    assert report["transmission"]["empirical_input_power"] == pytest.approx(10.0, rel=0.25)
