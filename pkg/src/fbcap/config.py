"""Run configuration: JSON parsing, validation and environment defaults."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from fbcap.bounds import DEFAULT_QUAD_TOL
from fbcap.dualopt import SolverSettings
from fbcap.spectra import NoiseModel

DEFAULT_M = 40
DEFAULT_H_MAX = 6
DEFAULT_OUTPUT_DIR = "runs/latest"
SCALE_POLICIES = ("exact", "violation")

FLAT_CHANNEL_WARNING = (
    "flat channel: strong duality assumes a non-flat noise spectrum; "
    "feedback does not increase capacity here"
)


class ConfigError(ValueError):
    """Raised with every violation found in a run configuration."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def env_threads_default() -> int:
    value = (os.getenv("FBCAP_THREADS", "1") or "1").strip()
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def env_output_dir_default() -> str:
    return (os.getenv("FBCAP_OUTPUT_DIR") or "").strip() or DEFAULT_OUTPUT_DIR


def env_log_level_default() -> str:
    return (os.getenv("FBCAP_LOG_LEVEL") or "").strip().upper() or "WARNING"


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 1000
    trials: int = 100
    nR_bits: int = 8
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RunConfig:
    channel: NoiseModel
    power: float
    m: int = DEFAULT_M
    h_max: int = DEFAULT_H_MAX
    quad_tol: float = DEFAULT_QUAD_TOL
    solver: SolverSettings = field(default_factory=SolverSettings)
    scale_policy: str = "exact"
    reduction_order: int | None = None
    simulation: SimulationConfig | None = None
    output_dir: str | None = None
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "channel": self.channel.to_dict(),
            "power": self.power,
            "m": self.m,
            "h_max": self.h_max,
            "quad_tol": self.quad_tol,
            "solver": asdict(self.solver),
            "synthesis": {"scale_policy": self.scale_policy},
            "reduction_order": self.reduction_order,
            "simulation": None if self.simulation is None else self.simulation.to_dict(),
            "output_dir": self.output_dir,
        }

    def with_overrides(self, **overrides: Any) -> RunConfig:
        """Apply CLI overrides (None means keep) and re-check the invariants."""
        solver_tol = overrides.pop("solver_tol", None)
        seed = overrides.pop("seed", None)
        simulate = overrides.pop("simulate", None)
        updates = {key: value for key, value in overrides.items() if value is not None}
        doc = self.to_dict()
        doc.update({key: updates.pop(key) for key in list(updates) if key in doc})
        if solver_tol is not None:
            doc["solver"]["tol_grad"] = solver_tol
        if simulate is True and doc["simulation"] is None:
            doc["simulation"] = SimulationConfig().to_dict()
        elif simulate is False:
            doc["simulation"] = None
        if seed is not None and doc["simulation"] is not None:
            doc["simulation"]["seed"] = seed
        if updates:
            raise TypeError(f"unknown overrides: {sorted(updates)}")
        return parse_config(doc)


def _number(doc: dict[str, Any], key: str, default: Any, kind: type, violations: list[str]) -> Any:
    value = doc.get(key, default)
    if value is None:
        return default
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        violations.append(f"{key} must be a number")
        return default
    if kind is int:
        if float(value) != int(value):
            violations.append(f"{key} must be an integer")
            return default
        return int(value)
    return float(value)


def _parse_solver(raw: Any, violations: list[str]) -> SolverSettings:
    if raw is None:
        return SolverSettings()
    if not isinstance(raw, dict):
        violations.append("solver must be an object")
        return SolverSettings()
    base = SolverSettings()
    values = {
        "tol_grad": _number(raw, "tol_grad", base.tol_grad, float, violations),
        "max_iter": _number(raw, "max_iter", base.max_iter, int, violations),
        "barrier_init": _number(raw, "barrier_init", base.barrier_init, float, violations),
        "barrier_shrink": _number(raw, "barrier_shrink", base.barrier_shrink, float, violations),
        "eliminate_nu": bool(raw.get("eliminate_nu", base.eliminate_nu)),
    }
    try:
        return SolverSettings(**values)
    except ValueError as e:
        violations.append(f"solver.{e}")
        return base


def _parse_simulation(raw: Any, violations: list[str]) -> SimulationConfig | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        violations.append("simulation must be an object or null")
        return None
    base = SimulationConfig()
    sim = SimulationConfig(
        n=_number(raw, "n", base.n, int, violations),
        trials=_number(raw, "trials", base.trials, int, violations),
        nR_bits=_number(raw, "nR_bits", base.nR_bits, int, violations),
        seed=_number(raw, "seed", base.seed, int, violations),
    )
    if sim.n < 1:
        violations.append("simulation.n must be >= 1")
    if sim.trials < 1:
        violations.append("simulation.trials must be >= 1")
    if not 1 <= sim.nR_bits <= 62:
        violations.append("simulation.nR_bits must lie in 1..62")
    return sim


def parse_config(doc: Any) -> RunConfig:
    """Check a decoded JSON document and collect every violation."""
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a JSON object"])
    violations: list[str] = []
    warnings: list[str] = []

    channel: NoiseModel | None = None
    raw_channel = doc.get("channel")
    if not isinstance(raw_channel, dict):
        violations.append("channel must be an object with 'num' and optional 'den'")
    else:
        try:
            channel = NoiseModel.from_dict(raw_channel)
        except (ValueError, TypeError) as e:
            violations.append(f"channel: {e}")
        else:
            if channel.is_flat:
                warnings.append(FLAT_CHANNEL_WARNING)

    power = _number(doc, "power", None, float, violations)
    if power is None:
        violations.append("power is required")
    elif not power > 0:
        violations.append("power must be > 0")

    m = _number(doc, "m", DEFAULT_M, int, violations)
    h_max = _number(doc, "h_max", DEFAULT_H_MAX, int, violations)
    if h_max < 1:
        violations.append("h_max must be >= 1")
    if m <= h_max:
        violations.append("m must exceed h_max")

    quad_tol = _number(doc, "quad_tol", DEFAULT_QUAD_TOL, float, violations)
    if not quad_tol > 0:
        violations.append("quad_tol must be > 0")

    solver = _parse_solver(doc.get("solver"), violations)

    synthesis = doc.get("synthesis") or {}
    scale_policy = synthesis.get("scale_policy", "exact") if isinstance(synthesis, dict) else None
    if scale_policy not in SCALE_POLICIES:
        violations.append(f"synthesis.scale_policy must be one of {', '.join(SCALE_POLICIES)}")

    reduction_order = doc.get("reduction_order")
    if reduction_order is not None:
        reduction_order = _number(doc, "reduction_order", None, int, violations)
        if reduction_order is not None and reduction_order < 1:
            violations.append("reduction_order must be >= 1")

    simulation = _parse_simulation(doc.get("simulation"), violations)

    output_dir = doc.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        violations.append("output_dir must be a string")

    if violations:
        raise ConfigError(violations)
    return RunConfig(
        channel=channel,
        power=power,
        m=m,
        h_max=h_max,
        quad_tol=quad_tol,
        solver=solver,
        scale_policy=scale_policy,
        reduction_order=reduction_order,
        simulation=simulation,
        output_dir=output_dir,
        warnings=tuple(warnings),
    )


def validate_config(raw: str) -> RunConfig:
    """Parse a JSON run configuration; ConfigError lists all violations."""
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError([f"malformed config: {e}"]) from e
    return parse_config(doc)


def load_config(path: str | Path) -> RunConfig:
    return validate_config(Path(path).read_text(encoding="utf-8"))

