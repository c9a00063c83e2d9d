"""End-to-end run: bounds sweep, synthesis, coding scheme, and persisted outputs."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any

from fbcap.bounds import LN2, LowerBound, nonfeedback_capacity, solve_sweep
from fbcap.config import RunConfig, env_output_dir_default, env_threads_default
from fbcap.control import simulate_transmission, stable_unstable_split, youla_controller
from fbcap.dualopt import DualSolution
from fbcap.freqgrid import FrequencyGrid
from fbcap.reduction import frequency_error, reduce_controller
from fbcap.spectra import NoiseModel
from fbcap.synthesis import (
    DegenerateFilterError,
    FirFilter,
    discretized_power,
    power_of_filter,
    primal_objective,
    rate_by_quadrature,
    rate_by_roots,
    recover_ab,
    synthesize,
)

logger = logging.getLogger(__name__)

HALF_BIT_SLACK = 1e-6
FLAT_SCHEME_WARNING = (
    "flat channel: the synthesized filter carries no power, so there is no coding scheme; "
    "the lower bound is the capacity without feedback"
)
CONVERGENCE_FIELDS = ("h", "upper_bits", "lower_bits", "gap_bits")


class PipelineError(RuntimeError):
    """Raised when no h in the sweep produced a certified bound."""


def synthesis_lower_bound(model: NoiseModel, P: float, policy: str = "exact") -> LowerBound:
    """Lower-bound callback for the sweep: the rate of the synthesized scheme.

    On a flat channel the Youla filter carries no power; the capacity without
    feedback, which feedback cannot beat there, is the lower bound instead.
    """

    def lower(sol: DualSolution, grid: FrequencyGrid) -> float:
        try:
            return synthesize(sol, grid, model, P, policy)[1]
        except DegenerateFilterError:
            if not sol.flat_spectrum:
                raise
            return nonfeedback_capacity(model, P)

    return lower


def _optional(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def build_convergence_csv(rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CONVERGENCE_FIELDS)
    for row in rows:
        writer.writerow([row["h"]] + [_optional(row.get(key)) for key in CONVERGENCE_FIELDS[1:]])
    return buf.getvalue()


def build_impulse_csv(coeffs: list[float]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("n", "c_n"))
    for n, c in enumerate(coeffs, start=1):
        writer.writerow((n, repr(float(c))))
    return buf.getvalue()


def build_convergence_markdown(report: dict[str, Any]) -> str:
    """Render the convergence table and headline numbers as markdown."""
    config = report.get("config") or {}
    channel = config.get("channel") or {}
    lines = [
        "# Feedback Capacity Bounds",
        "",
        f"- Channel: num={channel.get('num')} den={channel.get('den')}",
        f"- Power: {config.get('power')}",
        f"- Grid: m={config.get('m')}, h_max={config.get('h_max')}",
        f"- Status: {report.get('status')}",
    ]
    if report.get("error"):
        lines.append(f"- Error: {report['error']}")
    capacity = report.get("capacity_bits")
    if capacity:
        lines.append(
            f"- Feedback capacity in [{capacity['lower']:.10f}, {capacity['upper']:.10f}] bits/use "
            f"(gap {capacity['gap']:.3e})"
        )
    nonfeedback = report.get("nonfeedback_bits")
    if nonfeedback:
        lines.append(f"- Capacity without feedback: {nonfeedback['capacity']:.10f} bits/use")

    rows = report.get("convergence") or []
    lines.extend(["", "| h | upper bound | lower bound | gap | note |", "|---|---|---|---|---|"])
    if not rows:
        lines.append("| - | - | - | - | no rows |")

    def cell(value: float | None, fmt: str) -> str:
        return "n/a" if value is None else format(value, fmt)

    for row in rows:
        lines.append(
            f"| {row['h']} | {cell(row.get('upper_bits'), '.15f')} | "
            f"{cell(row.get('lower_bits'), '.15f')} | {cell(row.get('gap_bits'), '.3e')} | "
            f"{row.get('error') or ''} |"
        )
    return "\n".join(lines) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    with tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", dir=path.parent, prefix=f".{path.name}.", suffix=".tmp", delete=False
    ) as f:
        f.write(text)
        tmp = Path(f.name)
    os.replace(tmp, path)


def write_outputs(
    report: dict[str, Any],
    output_dir: str | Path,
    scheme: dict[str, Any] | None = None,
) -> dict[str, str]:
    """Write report.json, convergence.csv/.md and, when present, impulse.csv and scheme.json."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "report": (out / "report.json", json.dumps(report, indent=2) + "\n"),
        "convergence": (out / "convergence.csv", build_convergence_csv(report.get("convergence") or [])),
        "convergence_md": (out / "convergence.md", build_convergence_markdown(report)),
    }
    fir = report.get("filter")
    if fir:
        files["impulse"] = (out / "impulse.csv", build_impulse_csv(fir["coeffs"]))
    if scheme is not None:
        files["scheme"] = (out / "scheme.json", json.dumps(scheme, indent=2) + "\n")
    for path, text in files.values():
        _atomic_write(path, text)
    return {key: str(path) for key, (path, _) in files.items()}


def _build_scheme(report: dict[str, Any], config: RunConfig, fir: FirFilter) -> dict[str, Any]:
    """Controller, split, optional reduction and transmission; returns the scheme.json payload."""
    model, P = config.channel, config.power
    K = youla_controller(fir)
    scheme = stable_unstable_split(K)
    report["scheme"] = {
        "controller_order": K.n_states,
        "message_dim": scheme.message_dim,
        "rate_bits": scheme.rate_bits,
        "unstable_eigs": [[float(z.real), float(z.imag)] for z in scheme.unstable_eigs],
        "internally_stable": scheme.is_internally_stable(),
    }
    payload = {"controller": K.to_dict(), "split": scheme.to_dict()}

    if config.reduction_order is not None:
        reduced = reduce_controller(K, config.reduction_order)
        report["reduced_controller"] = {
            **reduced.to_dict(),
            "frequency_error": frequency_error(K, reduced.system),
        }

    if config.simulation is not None:
        sim = config.simulation
        stats = simulate_transmission(scheme, model, P, sim.n, sim.nR_bits, sim.trials, sim.seed)
        report["transmission"] = stats.to_dict()
    return payload


def run_pipeline(
    config: RunConfig,
    output_dir: str | Path | None = None,
    threads: int | None = None,
) -> dict[str, Any]:
    """Solve, bound, synthesize and (optionally) simulate; persist and return the report.

    On any failure the partial report is written with status "incomplete"
    and the error is re-raised.
    """
    out = Path(output_dir or config.output_dir or env_output_dir_default())
    threads = threads or env_threads_default()
    model, P = config.channel, config.power
    report: dict[str, Any] = {
        "status": "incomplete",
        "error": None,
        "config": config.to_dict(),
        "warnings": list(config.warnings),
    }
    scheme_payload: dict[str, Any] | None = None
    try:
        results = solve_sweep(
            model,
            P,
            config.m,
            range(1, config.h_max + 1),
            config.solver,
            config.quad_tol,
            synthesis_lower_bound(model, P, config.scale_policy),
            threads,
        )
        report["convergence"] = [r.report.to_dict() for r in results]
        solved = [r for r in results if r.report.ok and r.solution is not None]
        if not solved:
            raise PipelineError(f"no h in 1..{config.h_max} produced a certified bound")

        final = solved[-1]
        nfb = nonfeedback_capacity(model, P)
        try:
            fir, rate = synthesize(final.solution, final.grid, model, P, config.scale_policy)
        except DegenerateFilterError:
            if not final.solution.flat_spectrum:
                raise
            fir, rate = None, nfb
            report["warnings"].append(FLAT_SCHEME_WARNING)
            logger.warning(FLAT_SCHEME_WARNING)
        upper = min(r.report.upper_bits for r in solved)
        lower = max([rate] + [r.report.lower_bits for r in results if r.report.lower_bits is not None])
        report["capacity_bits"] = {"upper": upper, "lower": lower, "gap": upper - lower, "h": final.report.h}

        report["nonfeedback_bits"] = {
            "capacity": nfb,
            "half_bit_consistent": bool(upper >= nfb - HALF_BIT_SLACK and lower <= nfb + 0.5 + HALF_BIT_SLACK),
        }

        spec = recover_ab(final.solution, final.grid)
        report["duality"] = {
            "h": final.report.h,
            "dual_bits": final.solution.dual_bound_bits,
            "primal_bits": primal_objective(spec) / LN2,
            "discretized_power": discretized_power(spec),
            "lambda": final.solution.point.lam,
        }
        if fir is not None:
            report["filter"] = {
                **fir.to_dict(),
                "m": fir.m,
                "power": power_of_filter(fir, model),
                "rate_bits": rate,
                "rate_by_roots_bits": rate_by_roots(fir),
                "rate_by_quadrature_bits": rate_by_quadrature(fir),
            }
            scheme_payload = _build_scheme(report, config, fir)

        report["status"] = "ok"
    except (ValueError, RuntimeError, ArithmeticError) as e:
        report["error"] = f"{type(e).__name__}: {e}"
        logger.error("pipeline incomplete: %s", report["error"])
        write_outputs(report, out, scheme_payload)
        raise

    write_outputs(report, out, scheme_payload)
    return report
