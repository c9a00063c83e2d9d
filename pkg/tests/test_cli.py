import json

from click.testing import CliRunner

from fbcap import cli as cli_module
from fbcap.pipeline import PipelineError

SMALL = {"channel": {"num": [1.0, 0.1]}, "power": 10.0, "m": 8, "h_max": 1}


def _write_config(tmp_path, doc, name="channel.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def fake_report(upper=1.9, lower=1.8):
    return {"capacity_bits": {"upper": upper, "lower": lower, "gap": upper - lower, "h": 1}}


def test_run_command_end_to_end(tmp_path):
    config = _write_config(tmp_path, SMALL)
    out = tmp_path / "out"

    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["run", "--config", str(config), "--out", str(out)])

    assert result.exit_code == 0, result.output
    assert "upper bound:" in result.output
    assert "lower bound:" in result.output
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["status"] == "ok"
    assert (out / "convergence.csv").exists()


def test_run_command_passes_overrides(monkeypatch, tmp_path):
    captured = {}

    def fake_run_pipeline(config, output_dir=None, threads=None):
        captured.update(config=config, output_dir=output_dir, threads=threads)
        return fake_report()

    monkeypatch.setattr(cli_module, "run_pipeline", fake_run_pipeline)
    config = _write_config(tmp_path, SMALL)

    runner = CliRunner()
    result = runner.invoke(
        cli_module.cli,
        [
            "run",
            "--config",
            str(config),
            "--out",
            str(tmp_path / "o"),
            "--m",
            "16",
            "--h-max",
            "3",
            "--power",
            "2.5",
            "--simulate",
            "--seed",
            "9",
            "--solver-tol",
            "1e-7",
            "--threads",
            "3",
        ],
    )

    assert result.exit_code == 0, result.output
    run_config = captured["config"]
    assert (run_config.m, run_config.h_max, run_config.power) == (16, 3, 2.5)
    assert run_config.solver.tol_grad == 1e-7
    assert run_config.simulation.seed == 9
    assert captured["output_dir"] == str(tmp_path / "o")
    assert captured["threads"] == 3
    assert "gap:" in result.output


def test_run_command_threads_default_from_env(monkeypatch, tmp_path):
    captured = {}

    def fake_run_pipeline(config, output_dir=None, threads=None):
        captured["threads"] = threads
        return fake_report()

    monkeypatch.setenv("FBCAP_THREADS", "5")
    monkeypatch.setattr(cli_module, "run_pipeline", fake_run_pipeline)
    config = _write_config(tmp_path, SMALL)

    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["run", "--config", str(config), "--out", str(tmp_path / "o")])

    assert result.exit_code == 0
    assert captured["threads"] == 5


def test_run_command_rejects_nonpositive_power(tmp_path):
    config = _write_config(tmp_path, {**SMALL, "power": 0.0})
    out = tmp_path / "out"

    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["run", "--config", str(config), "--out", str(out)])

    assert result.exit_code == 1
    assert "Error: power must be > 0" in result.output
    assert not out.exists()


def test_run_command_rejects_override_that_breaks_config(tmp_path):
    config = _write_config(tmp_path, SMALL)

    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["run", "--config", str(config), "--m", "1"])

    assert result.exit_code == 1
    assert "m must exceed h_max" in result.output


def test_run_command_missing_config_file(tmp_path):
    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["run", "--config", str(tmp_path / "missing.json")])

    assert result.exit_code == 1
    assert "Error:" in result.output


def test_run_command_reports_partial_results(monkeypatch, tmp_path):
    def failing_run_pipeline(config, output_dir=None, threads=None):
        raise PipelineError("no h in 1..1 produced a certified bound")

    monkeypatch.setattr(cli_module, "run_pipeline", failing_run_pipeline)
    config = _write_config(tmp_path, SMALL)
    out = tmp_path / "partial"

    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["run", "--config", str(config), "--out", str(out)])

    assert result.exit_code == 1
    assert "Error: no h in 1..1 produced a certified bound" in result.output
    assert f"Partial results written to {out}" in result.output


def test_run_command_echoes_flat_channel_warning(monkeypatch, tmp_path):
    monkeypatch.setattr(cli_module, "run_pipeline", lambda config, output_dir=None, threads=None: fake_report())
    config = _write_config(tmp_path, {"channel": {"num": [1.0]}, "power": 1.0, "m": 8, "h_max": 1})

    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["run", "--config", str(config), "--out", str(tmp_path / "o")])

    assert result.exit_code == 0
    assert "Warning: flat channel" in result.output


def test_check_config_ok(tmp_path):
    config = _write_config(tmp_path, SMALL)

    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["check-config", "--config", str(config)])

    assert result.exit_code == 0
    assert "OK: m=8 h_max=1 power=10.0" in result.output


def test_check_config_lists_every_violation(tmp_path):
    config = _write_config(tmp_path, {"channel": {"num": [1.0, 0.1]}, "power": -1, "m": 2, "h_max": 4})

    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["check-config", "--config", str(config)])

    assert result.exit_code == 1
    assert "Error: power must be > 0" in result.output
    assert "Error: m must exceed h_max" in result.output


def test_check_config_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{", encoding="utf-8")

    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["check-config", "--config", str(path)])

    assert result.exit_code == 1
    assert "Error: malformed config:" in result.output


def test_compare_command(tmp_path):
    report = {
        "convergence": [{"h": 1, "upper_bits": 1.9536, "lower_bits": 1.838}],
        "capacity_bits": {"upper": 1.9536, "lower": 1.838},
    }
    reference = {"tolerance": 1e-3, "rows": [{"h": 1, "upper_bits": 1.95361, "lower_bits": 1.83799}]}
    report_path = _write_config(tmp_path, report, "report.json")
    reference_path = _write_config(tmp_path, reference, "reference.json")

    runner = CliRunner()
    ok = runner.invoke(cli_module.cli, ["compare", str(report_path), str(reference_path)])
    strict = runner.invoke(cli_module.cli, ["compare", str(report_path), str(reference_path), "--tol", "1e-9"])

    assert ok.exit_code == 0
    assert "[fbcap] report matches reference" in ok.output
    assert strict.exit_code == 1
    assert "[fbcap] WARNING: report deviates from reference:" in strict.output
    assert "h=1 | upper_bits" in strict.output


def test_log_level_option_is_validated(tmp_path):
    config = _write_config(tmp_path, SMALL)

    runner = CliRunner()
    result = runner.invoke(cli_module.cli, ["--log-level", "LOUD", "check-config", "--config", str(config)])

    assert result.exit_code == 2
