"""CLI for feedback-capacity bounds and coding-scheme synthesis using Click."""

import logging
import os
import sys
from pathlib import Path

import click
from dotenv import load_dotenv

# Load environment variables from .env file before option defaults are resolved.
env_path = Path.cwd() / ".env"
if env_path.exists():
    load_dotenv(env_path)

from fbcap.config import (
    ConfigError,
    env_log_level_default,
    env_output_dir_default,
    env_threads_default,
    load_config,
)
from fbcap.pipeline import run_pipeline
from fbcap.reference import compare_to_reference, format_deviations, load_json

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


@click.group()
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default=lambda: env_log_level_default(),
    show_default="env:FBCAP_LOG_LEVEL or WARNING",
    help="Logging level for solver and pipeline messages",
)
@click.pass_context
def cli(ctx: click.Context, log_level: str) -> None:
    """fbcap - bounds on Gaussian feedback capacity and the coding scheme that achieves them."""
    logging.basicConfig(level=log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["log_level"] = log_level.upper()


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Run config JSON")
@click.option(
    "--out",
    default=None,
    help="Output directory (defaults to the config's output_dir, then env:FBCAP_OUTPUT_DIR or runs/latest)",
)
@click.option("--m", "m", type=int, default=None, help="Grid half-resolution")
@click.option("--h-max", type=int, default=None, help="Largest number of causality constraints")
@click.option("--power", type=float, default=None, help="Input power budget P")
@click.option("--seed", type=int, default=None, help="Simulation seed")
@click.option("--simulate/--no-simulate", default=None, help="Run the Monte-Carlo transmission")
@click.option("--quad-tol", type=float, default=None, help="Absolute quadrature tolerance")
@click.option("--solver-tol", type=float, default=None, help="Dual solver gradient tolerance")
@click.option(
    "--threads",
    type=int,
    default=lambda: env_threads_default(),
    show_default="env:FBCAP_THREADS or 1",
    help="Worker threads for the h sweep",
)
def run(
    config_path: str,
    out: str | None,
    m: int | None,
    h_max: int | None,
    power: float | None,
    seed: int | None,
    simulate: bool | None,
    quad_tol: float | None,
    solver_tol: float | None,
    threads: int,
) -> None:
    """Run the full pipeline and write report.json, convergence.csv, impulse.csv and scheme.json."""
    try:
        config = load_config(config_path).with_overrides(
            m=m,
            h_max=h_max,
            power=power,
            quad_tol=quad_tol,
            solver_tol=solver_tol,
            seed=seed,
            simulate=simulate,
        )
    except (OSError, ConfigError) as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)

    for warning in config.warnings:
        click.echo(f"Warning: {warning}", err=True)
    output_dir = out or config.output_dir or env_output_dir_default()
    try:
        report = run_pipeline(config, output_dir=output_dir, threads=threads)
    except (ValueError, RuntimeError, ArithmeticError) as e:
        click.echo(f"Error: {e}", err=True)
        click.echo(f"Partial results written to {output_dir}", err=True)
        sys.exit(1)

    capacity = report["capacity_bits"]
    click.echo(f"upper bound: {capacity['upper']:.10f} bits/use")
    click.echo(f"lower bound: {capacity['lower']:.10f} bits/use")
    click.echo(f"gap:         {capacity['gap']:.3e}")
    click.echo(f"outputs:     {os.path.abspath(output_dir)}")


@cli.command("check-config")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Run config JSON")
def check_config(config_path: str) -> None:
    """Validate a run config and print any warnings."""
    try:
        config = load_config(config_path)
    except ConfigError as e:
        for violation in e.violations:
            click.echo(f"Error: {violation}", err=True)
        sys.exit(1)
    except OSError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)
    for warning in config.warnings:
        click.echo(f"Warning: {warning}")
    click.echo(f"OK: m={config.m} h_max={config.h_max} power={config.power}")


@cli.command()
@click.argument("report_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("reference_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--tol", type=float, default=None, help="Override the reference tolerance")
def compare(report_path: str, reference_path: str, tol: float | None) -> None:
    """Compare REPORT (report.json) against a REFERENCE table; exit 1 on deviations."""
    try:
        deviations = compare_to_reference(load_json(report_path), load_json(reference_path), tol)
    except (ValueError, KeyError) as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)
    click.echo(format_deviations(deviations))
    if deviations:
        sys.exit(1)


def main() -> None:
    """Entry point for the CLI."""
    cli()


if __name__ == "__main__":
    main()
