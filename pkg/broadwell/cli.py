#!/usr/bin/env python3
"""A command line application to run Broadwell experiments."""
import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

import broadwell.exceptions as exceptions
from broadwell.blowup import detect_blowup, write_blowup_report
from broadwell.fields import Boundary, Domain, Field, random_field, sup_norm, write_snapshot
from broadwell.functionals import (
    MONITOR_NAMES,
    FunctionalSeries,
    LinePair,
    MonitorSet,
    MovingLineSeries,
    Theorem1Params,
    Theorem2Params,
    moving_line_name,
)
from broadwell.helpers import setup_logger, target_directory
from broadwell.model import (
    VelocityModel,
    broadwell2d,
    dump_model,
    load_model,
    validate_conservation,
)
from broadwell.parser import parse_config_text, parse_value
from broadwell.scenario import (
    Fig3Layout,
    PacketSpec,
    ScenarioConfig,
    detect_interaction,
    scenario_fig3,
    track_centroids,
    write_centroids,
)
from broadwell.solver_physical import (
    MIN_PICARD_SUBSTEPS,
    PhysicalStepConfig,
    PicardConfig,
    RunResult,
    RunStatus,
    picard_solve,
    run_physical,
)
from broadwell.solver_rescaled import RescaledStepConfig, run_rescaled
from broadwell.version import __version__

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MONITOR = 1
EXIT_SOLVER = 2
EXIT_IO = 3

MODES = (
    "physical", "rescaled", "verify-thm1", "verify-thm2", "scenario", "blowup-scan",
    "picard-check",
)
RESCALED_MODES = ("rescaled", "verify-thm1", "verify-thm2")
INITIAL_KINDS = ("zero", "uniform", "random", "packets", "fig3")
RATE_CONSTANTS = (0.25, 0.2)
MOVING_LINE_TOL = 1e-3

# key -> (type, default); None defaults are resolved per mode or stay unset
SCHEMA: Dict[str, Tuple[str, Any]] = {
    "mode": ("str", None),
    "seed": ("int", 0),
    "t_end": ("float", None),
    "kappa": ("float", 1.0),
    "theta": ("float", None),
    "monitors": ("names", None),
    "grid.nx": ("int", 256),
    "grid.ny": ("int", 256),
    "domain.halfwidth": ("float", 2.0),
    "domain.boundary": ("str", "periodic"),
    "model.file": ("str", None),
    "model.collisions": ("bool", True),
    "physical.dt_mode": ("str", "lockstep"),
    "physical.collision_integrator": ("str", "rk2"),
    "physical.dt_max": ("float", 0.01),
    "physical.density_cfl": ("float", 0.5),
    "physical.interp_order": ("int", 1),
    "rescaled.L": ("float", 3.0),
    "rescaled.dt": ("float", 0.02),
    "rescaled.collision_integrator": ("str", "rk2"),
    "rescaled.interp_order": ("int", 1),
    "rescaled.collisions": ("bool", True),
    "rescaled.t_start": ("float", None),
    "initial.kind": ("str", None),
    "initial.values": ("floats", None),
    "initial.amplitude": ("float", None),
    "output.dir": ("str", "out"),
    "output.every_t": ("float", 0.1),
    "output.snap_every_t": ("float", 0.0),
    "scenario.inner_square_halfwidth": ("float", 0.5),
    "scenario.background": ("float", 0.0),
    "scenario.p1": ("floats", [-0.8, -0.8]),
    "scenario.p2": ("floats", [-0.4, -0.4]),
    "scenario.p3_delay": ("float", 0.3),
    "scenario.width": ("float", 0.06),
    "scenario.amplitude": ("float", 1.0),
    "scenario.shape": ("str", "smooth_bump"),
    "picard.T": ("float", 0.2),
    "picard.tol": ("float", 1e-8),
    "picard.max_iters": ("int", 30),
    "picard.substeps": ("int", 16),
    "picard.agreement": ("float", 1e-3),
    "blowup.rate_constant": ("float", 0.25),
}

PACKET_SCHEMA: Dict[str, Tuple[str, Any]] = {
    "species": ("int", None),
    "center": ("floats", None),
    "widths": ("floats", [0.06, 0.06]),
    "amplitude": ("float", 1.0),
    "shape": ("str", "smooth_bump"),
}

MODE_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "physical": {
        "initial.kind": "random", "t_end": 1.0, "monitors": ["sup", "mass", "conservation"],
    },
    "rescaled": {
        "initial.kind": "random", "t_end": 10.0, "monitors": ["sup", "mass", "moving_lines"],
    },
    "verify-thm1": {
        "initial.kind": "random",
        "t_end": 10.0,
        "monitors": ["q14_thm1", "mass", "lines", "moving_lines", "sup"],
    },
    "verify-thm2": {
        "initial.kind": "random", "monitors": ["q14_thm2", "lines", "step_a", "sup"],
    },
    "scenario": {
        "initial.kind": "fig3", "t_end": 1.0, "grid.nx": 128, "grid.ny": 128,
        "monitors": ["sup", "mass"],
    },
    "blowup-scan": {
        "initial.kind": "fig3", "t_end": 1.0, "grid.nx": 128, "grid.ny": 128,
        "monitors": ["sup"],
    },
    "picard-check": {
        "initial.kind": "random", "initial.amplitude": 0.2, "grid.nx": 64, "grid.ny": 64,
        "domain.halfwidth": 1.6, "monitors": ["sup"],
    },
}


@dataclass
class RunConfig:
    """A validated run configuration with every default filled in."""

    values: Dict[str, Any]
    packets: Tuple[PacketSpec, ...] = ()
    source: str = "<string>"

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def mode(self) -> str:
        return self.values["mode"]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def rescaled(self) -> bool:
        return self.mode in RESCALED_MODES

    @property
    def thm1(self) -> Theorem1Params:
        return Theorem1Params(self.values["kappa"])

    @property
    def thm2(self) -> Optional[Theorem2Params]:
        theta = self.values["theta"]
        return None if theta is None else Theorem2Params(theta)


@dataclass
class RunOutcome:
    """What a mode produced, for the summary and the exit status."""

    status: str
    exit_code: int
    series: FunctionalSeries = field(default_factory=FunctionalSeries)
    lines: List[Tuple[str, Any]] = field(default_factory=list)
    failed_checks: List[str] = field(default_factory=list)


def main():
    """Command line application to run Broadwell experiments."""
    # noinspection PyTypeChecker
    parser = argparse.ArgumentParser(description=main.__doc__)
    args = _parse_args(parser)
    if args.verbose:
        log_filename = None
        if args.logfile:
            log_filename = args.logfile
        setup_logger(logging.DEBUG, log_filename=log_filename)
        logger.debug(f"broadwell version: {__version__}")

    overrides = [item for group in args.override or () for item in group]
    try:
        config = parse_config(args.config, overrides=overrides)
    except OSError as err:
        print(f"could not read {args.config}: {err}", file=sys.stderr)
        sys.exit(EXIT_IO)
    except exceptions.ConfigError as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        sys.exit(EXIT_SOLVER)
    if args.seed is not None:
        config.values["seed"] = args.seed
    if args.out:
        config.values["output.dir"] = args.out
    sys.exit(run(config))


def _parse_args(
    parser: argparse.ArgumentParser, args: Optional[List] = None
) -> argparse.Namespace:
    parser.add_argument("config", help="Path of the run configuration file")
    parser.add_argument(
        "--version", action="version", version="%(prog)s " + __version__,
    )
    parser.add_argument(
        "--out",
        help=(
            "The output directory for series, snapshots and the summary. "
            "Overrides output.dir"
        ),
    )
    parser.add_argument(
        "--seed", type=int, help="Seed for randomized initial data",
    )
    parser.add_argument(
        "--override",
        action="append",
        nargs="+",
        metavar="KEY=VALUE",
        help="Override a configuration key, e.g. rescaled.dt=0.01",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        dest="verbose",
        help="Set logger output to verbose output.",
    )
    parser.add_argument(
        "--logfile",
        action="store",
        help="logging debug and error messages into a log file",
    )
    return parser.parse_args(args)


def _coerce(key_path: str, kind: str, value: Any) -> Any:
    if value is None:
        return None
    if kind == "str":
        if not isinstance(value, str):
            raise exceptions.ConfigError(key_path, f"expected a string, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise exceptions.ConfigError(key_path, f"expected true or false, got {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise exceptions.ConfigError(key_path, f"expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise exceptions.ConfigError(key_path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise exceptions.ConfigError(key_path, f"expected a finite number, got {value!r}")
        return float(value)
    if kind == "floats":
        if not isinstance(value, (list, tuple)):
            raise exceptions.ConfigError(key_path, f"expected a list of numbers, got {value!r}")
        return [_coerce(f"{key_path}[{i}]", "float", v) for i, v in enumerate(value)]
    if kind == "names":
        if isinstance(value, str):
            value = [part.strip() for part in value.split(",") if part.strip()]
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
            raise exceptions.ConfigError(key_path, f"expected a list of names, got {value!r}")
        return list(value)
    raise exceptions.ConfigError(key_path, f"unsupported type {kind}")


def _require(key_path: str, ok: bool, reason: str) -> None:
    if not ok:
        raise exceptions.ConfigError(key_path, reason)


def _build_packets(tables: Sequence[Dict[str, Any]]) -> Tuple[PacketSpec, ...]:
    packets = []
    for i, table in enumerate(tables, start=1):
        prefix = f"packet[{i}]"
        unknown = sorted(set(table) - set(PACKET_SCHEMA))
        if unknown:
            raise exceptions.ConfigError(f"{prefix}.{unknown[0]}", "unknown key")
        spec = {}
        for key, (kind, default) in PACKET_SCHEMA.items():
            value = _coerce(f"{prefix}.{key}", kind, table.get(key, default))
            _require(f"{prefix}.{key}", value is not None, "missing required key")
            spec[key] = value
        for key in ("center", "widths"):
            _require(f"{prefix}.{key}", len(spec[key]) == 2, "expected two numbers")
        try:
            packets.append(
                PacketSpec(
                    spec["species"], tuple(spec["center"]), tuple(spec["widths"]),
                    spec["amplitude"], spec["shape"],
                )
            )
        except (exceptions.BroadwellError, ValueError) as err:
            raise exceptions.ConfigError(prefix, str(err))
    return tuple(packets)


def parse_config(path: str, overrides: Sequence[str] = ()) -> RunConfig:
    """Read, default and validate a run configuration file.

    :param str path:
        Configuration file.
    :param overrides:
        ``key=value`` strings applied on top of the file.
    :raises ConfigError:
        Unknown or duplicate keys, type errors and invariant violations;
        the message starts with the key path.
    :raises OSError:
        The file cannot be read.
    :rtype: RunConfig
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_string(text, path=path, overrides=overrides)


def parse_config_string(
    text: str, path: str = "<string>", overrides: Sequence[str] = ()
) -> RunConfig:
    """Like :func:`parse_config`, for text already in memory."""
    raw, tables = parse_config_text(text, path)
    for item in overrides:
        key, sep, rhs = item.partition("=")
        key = key.strip()
        _require(key or item, bool(sep), "override must look like key=value")
        _require(key, not key.startswith("packet"), "packet tables cannot be overridden")
        raw[key] = parse_value(rhs, key)

    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise exceptions.ConfigError(unknown[0], "unknown key")
    mode = _coerce("mode", "str", raw.get("mode"))
    _require("mode", mode is not None, "missing required key")
    _require("mode", mode in MODES, f"unknown mode {mode!r}, expected one of {MODES}")

    defaults = dict(MODE_DEFAULTS[mode])
    if tables and "initial.kind" not in raw:
        defaults["initial.kind"] = "packets"
    values = {}
    for key, (kind, default) in SCHEMA.items():
        if key in raw:
            values[key] = _coerce(key, kind, raw[key])
        else:
            values[key] = defaults.get(key, default)
            if key in defaults:
                logger.debug("applied %s default %s=%r", mode, key, values[key])
    config = RunConfig(values, _build_packets(tables), path)
    _validate(config)
    return config


def _validate(config: RunConfig) -> None:
    v = config.values
    mode = config.mode
    _require("kappa", v["kappa"] > 0, "kappa must be positive")
    if v["theta"] is not None:
        _require("theta", 0.0 < v["theta"] < 0.25, f"theta={v['theta']!r} must satisfy 0 < theta < 1/4")
    if mode == "verify-thm2":
        _require("theta", v["theta"] is not None, "verify-thm2 needs theta")
        t0 = Theorem2Params(v["theta"]).t0
        if v["rescaled.t_start"] is None:
            v["rescaled.t_start"] = t0
        if v["t_end"] is None:
            v["t_end"] = 3.0 * t0
    if v["rescaled.t_start"] is None:
        v["rescaled.t_start"] = 0.0
    if v["t_end"] is None:
        v["t_end"] = v["picard.T"] if mode == "picard-check" else 1.0
    start = v["rescaled.t_start"] if config.rescaled else 0.0
    _require("t_end", v["t_end"] > start, f"t_end must be after the start time {start!r}")

    for key in ("grid.nx", "grid.ny"):
        _require(key, v[key] >= 4, "need at least 4 cells")
    _require("domain.halfwidth", v["domain.halfwidth"] > 0, "must be positive")
    _require(
        "domain.boundary", v["domain.boundary"] in [b.value for b in Boundary],
        "expected periodic or outflow",
    )
    _require("physical.dt_mode", v["physical.dt_mode"] in ("lockstep", "free"),
             "expected lockstep or free")
    for key in ("physical.collision_integrator", "rescaled.collision_integrator"):
        _require(key, v[key] in ("rk2", "exact_pair"), "expected rk2 or exact_pair")
    _require("physical.density_cfl", 0.0 < v["physical.density_cfl"] <= 1.0,
             "density_cfl must lie in (0, 1]")
    _require("physical.dt_max", v["physical.dt_max"] > 0, "must be positive")
    for key in ("physical.interp_order", "rescaled.interp_order"):
        _require(key, v[key] in (1, 3), "expected 1 or 3")
    _require("rescaled.L", v["rescaled.L"] > 1.0, "L must exceed 1")
    _require("rescaled.dt", v["rescaled.dt"] > 0, "must be positive")
    _require("output.every_t", v["output.every_t"] > 0, "must be positive")
    _require("output.snap_every_t", v["output.snap_every_t"] >= 0, "must be non-negative")
    _require("blowup.rate_constant", v["blowup.rate_constant"] in RATE_CONSTANTS,
             f"expected one of {RATE_CONSTANTS}")
    _require("picard.T", v["picard.T"] > 0, "must be positive")
    _require("picard.tol", v["picard.tol"] > 0, "must be positive")
    _require("picard.max_iters", v["picard.max_iters"] >= 1, "must be at least 1")
    _require("picard.substeps", v["picard.substeps"] >= MIN_PICARD_SUBSTEPS,
             f"must be at least {MIN_PICARD_SUBSTEPS}")

    kind = v["initial.kind"]
    _require("initial.kind", kind in INITIAL_KINDS, f"expected one of {INITIAL_KINDS}")
    if kind == "uniform":
        _require("initial.values", v["initial.values"] is not None, "uniform data needs values")
    if kind == "packets":
        _require("initial.kind", bool(config.packets), "packet data needs [[packet]] tables")
    if v["initial.amplitude"] is not None:
        _require("initial.amplitude", v["initial.amplitude"] >= 0, "must be non-negative")
    for key in ("scenario.p1", "scenario.p2"):
        _require(key, len(v[key]) == 2, "expected two numbers")
    scenario_config(config)

    monitors = v["monitors"] or []
    for name in monitors:
        _require("monitors", name in MONITOR_NAMES, f"unknown monitor {name!r}")
    if any(name in monitors for name in ("q14_thm2", "step_a")):
        _require("theta", v["theta"] is not None, "monitors q14_thm2/step_a need theta")
    if config.rescaled:
        _require("monitors", "conservation" not in monitors,
                 "conservation is monitored in physical runs only")


def _load_model(config: RunConfig) -> VelocityModel:
    path = config["model.file"]
    model = load_model(path) if path else broadwell2d()
    report = validate_conservation(model)
    if not report.valid:
        logger.warning("model violates conservation identities: %s", report)
    if not config["model.collisions"]:
        model = VelocityModel(model.speeds, np.zeros_like(model.coeffs), model.names)
    return model


def _domain(config: RunConfig) -> Domain:
    if config.rescaled:
        L = config["rescaled.L"]
        return Domain(-L, L, -L, L, config["grid.nx"], config["grid.ny"], Boundary.OUTFLOW)
    hw = config["domain.halfwidth"]
    return Domain(
        -hw, hw, -hw, hw, config["grid.nx"], config["grid.ny"],
        Boundary(config["domain.boundary"]),
    )


def scenario_config(config: RunConfig) -> ScenarioConfig:
    """The scenario block: the ``[[packet]]`` tables or, for ``fig3`` data, the packet chain."""
    common = dict(
        inner_square_halfwidth=config["scenario.inner_square_halfwidth"],
        background=config["scenario.background"],
    )
    try:
        if config["initial.kind"] != "fig3":
            return ScenarioConfig(config.packets, **common)
        layout = Fig3Layout(
            p1=tuple(config["scenario.p1"]),
            p2=tuple(config["scenario.p2"]),
            p3_delay=config["scenario.p3_delay"],
            width=config["scenario.width"],
            amplitude=config["scenario.amplitude"],
            shape=config["scenario.shape"],
        )
        return ScenarioConfig.fig3(layout, **common)
    except exceptions.ParameterDomainError as err:
        raise exceptions.ConfigError(f"scenario.{err.name}", str(err))
    except (exceptions.BroadwellError, ValueError) as err:
        raise exceptions.ConfigError("scenario", str(err))


def initial_field(config: RunConfig, domain: Domain, n_species: int = 4) -> Field:
    """Initial data selected by ``initial.kind``."""
    kind = config["initial.kind"]
    time = config["rescaled.t_start"] if config.rescaled else 0.0
    if kind == "zero":
        data = Field.zeros(domain, n_species).data
    elif kind == "uniform":
        values = config["initial.values"]
        if len(values) != n_species:
            raise exceptions.ConfigError(
                "initial.values", f"expected {n_species} values, got {len(values)}"
            )
        data = Field.uniform(domain, values).data
    elif kind == "random":
        amplitude = config["initial.amplitude"]
        if amplitude is None:
            amplitude = config["kappa"]
            if config.mode == "verify-thm2":
                amplitude = min(amplitude, config.thm2.cap(config["rescaled.t_start"]))
        data = random_field(domain, amplitude, config.seed, n_species).data
    else:
        data = scenario_fig3(scenario_config(config), domain, n_species).data
    return Field(domain, data, time=time)


def _monitors(config: RunConfig, model: VelocityModel) -> MonitorSet:
    names = config["monitors"] or []
    thm1 = config.thm1 if (config.mode == "verify-thm1" or "q14_thm1" in names) else None
    return MonitorSet(names, thm1=thm1, thm2=config.thm2, model=model)


def moving_line_series(series: FunctionalSeries) -> List[MovingLineSeries]:
    """Rebuild the ``moving_lines`` monitor output per pair."""
    out = []
    for pair in LinePair:
        records = series.filter(name=moving_line_name(pair))
        if len(records):
            out.append(
                MovingLineSeries(
                    pair,
                    [r.time for r in records],
                    [r.line_coord for r in records],
                    [r.value for r in records],
                )
            )
    return out


def _solver_outcome(config: RunConfig, result: RunResult, outcome: RunOutcome) -> None:
    violations = result.series.violations()
    for record in violations[:20]:
        logger.warning(
            "%s=%.6g exceeds bound %.6g at t=%.6g", record.name, record.value, record.bound,
            record.time,
        )
    outcome.failed_checks.extend(f"{r.name}@{r.time:.6g}" for r in violations)
    for line in moving_line_series(result.series):
        if not line.is_nonincreasing(MOVING_LINE_TOL):
            outcome.failed_checks.append(f"{moving_line_name(line.pair)} increased")
    sup = sup_norm(result.field)
    outcome.lines.extend([
        ("final_time", result.field.time),
        ("final_sup", sup.value),
        ("steps", result.steps),
        ("clamped_mass", result.field.clamped_mass),
        ("checks_passed", result.series.checked_count() - len(violations)),
        ("checks_failed", len(outcome.failed_checks)),
        ("tags", ",".join(result.tags)),
    ])
    outcome.status = result.status.value
    if result.status is not RunStatus.COMPLETED:
        outcome.exit_code = EXIT_SOLVER
    elif outcome.failed_checks:
        outcome.exit_code = EXIT_MONITOR


def _run_solver(config: RunConfig, model: VelocityModel, initial: Field) -> RunResult:
    monitors = _monitors(config, model)
    every_t = config["output.every_t"]
    snap_every_t = config["output.snap_every_t"]
    if config.mode == "scenario" and not snap_every_t:
        snap_every_t = every_t
    if config.rescaled:
        cfg = RescaledStepConfig(
            dt=config["rescaled.dt"],
            L=config["rescaled.L"],
            collision_integrator=config["rescaled.collision_integrator"],
            interp_order=config["rescaled.interp_order"],
            collisions=config["rescaled.collisions"],
            cap_theta=config["theta"] if config.mode == "verify-thm2" else None,
        )
        return run_rescaled(initial, cfg, config["t_end"], monitors, every_t, snap_every_t)
    return run_physical(
        initial, model, _physical_cfg(config), config["t_end"], monitors, every_t, snap_every_t
    )


def _physical_cfg(config: RunConfig) -> PhysicalStepConfig:
    return PhysicalStepConfig(
        dt_mode=config["physical.dt_mode"],
        collision_integrator=config["physical.collision_integrator"],
        dt_max=config["physical.dt_max"],
        density_cfl=config["physical.density_cfl"],
        interp_order=config["physical.interp_order"],
    )


def _execute(config: RunConfig, target: str, outcome: RunOutcome) -> None:
    model = broadwell2d() if config.rescaled else _load_model(config)
    if not config.rescaled:
        with open(os.path.join(target, "model.txt"), "w", encoding="utf-8", newline="") as fh:
            fh.write(dump_model(model))
    domain = _domain(config)
    initial = initial_field(config, domain, model.n_species)

    if config.mode == "picard-check":
        _picard_check(config, model, initial, outcome)
        return

    result = _run_solver(config, model, initial)
    outcome.series = result.series
    _solver_outcome(config, result, outcome)
    if config["output.snap_every_t"] > 0:
        for snap in result.snapshots:
            write_snapshot(snap, target)

    if config.mode == "scenario":
        scenario = scenario_config(config)
        records = track_centroids(result.snapshots, scenario)
        write_centroids(records, os.path.join(target, "centroids.csv"))
        events = [e for e in (detect_interaction(s) for s in result.snapshots) if e]
        outcome.lines.append(("interactions", len(events)))
        outcome.lines.append(("warnings", "; ".join(scenario.warnings())))

    if config.mode == "blowup-scan":
        candidate = None
        try:
            candidate = detect_blowup(
                result.sup_trace, sup_norm(result.field).location
                if not result.field.diverged else (math.nan, math.nan),
                config["blowup.rate_constant"],
            )
        except exceptions.NoBlowupTrend as err:
            outcome.lines.append(("trend", str(err)))
        write_blowup_report(candidate, result.sup_trace, os.path.join(target, "blowup_report.csv"))
        if candidate is not None:
            outcome.lines.extend([
                ("t_star_est", candidate.t_star_est),
                ("fit_quality", candidate.fit_quality),
                ("ratio_inconsistent", candidate.inconsistent),
            ])
        # diverging or stalling is what a scan is looking for
        if outcome.exit_code == EXIT_SOLVER:
            outcome.exit_code = EXIT_OK


def _picard_check(
    config: RunConfig, model: VelocityModel, initial: Field, outcome: RunOutcome
) -> None:
    T = config["picard.T"]
    trajectory, iterations = picard_solve(
        initial,
        model,
        PicardConfig(
            T=T,
            tol=config["picard.tol"],
            max_iters=config["picard.max_iters"],
            substeps=config["picard.substeps"],
            interp_order=config["physical.interp_order"],
        ),
    )
    result = run_physical(initial, model, _physical_cfg(config), T)
    outcome.status = result.status.value
    if not result.completed:
        outcome.exit_code = EXIT_SOLVER
        return
    gap = float(np.max(np.abs(trajectory[-1].data - result.field.data)))
    agreement = config["picard.agreement"]
    outcome.series.append(T, "picard_iterations", iterations)
    outcome.series.append(T, "picard_gap", gap, agreement)
    outcome.lines.extend([
        ("picard_iterations", iterations),
        ("picard_gap", gap),
        ("final_sup", sup_norm(result.field).value),
    ])
    if gap > agreement:
        outcome.failed_checks.append("picard_gap")
        outcome.exit_code = EXIT_MONITOR
    outcome.lines.append(("checks_failed", len(outcome.failed_checks)))


def _write_summary(config: RunConfig, outcome: RunOutcome, target: str) -> None:
    lines = [
        ("mode", config.mode),
        ("seed", config.seed),
        ("status", outcome.status),
        ("exit_code", outcome.exit_code),
    ] + outcome.lines
    if outcome.failed_checks:
        lines.append(("failed", ", ".join(outcome.failed_checks[:50])))
    with open(os.path.join(target, "summary.txt"), "w", encoding="utf-8", newline="") as fh:
        for key, value in lines:
            fh.write(f"{key}: {value}\n")


def run(config: RunConfig) -> int:
    """Execute the preset of ``config`` and write its outputs.

    Writes ``series.csv`` and ``summary.txt`` (also on failure) plus the
    mode's extra files into ``output.dir``.

    :param RunConfig config:
        Validated configuration.
    :rtype: int
    :returns:
        0 when the solver completed and every monitor passed, 1 on a
        monitor violation, 2 on solver failure, 3 on I/O errors.
    """
    try:
        target = target_directory(config["output.dir"])
        if os.path.exists(os.path.join(target, "summary.txt")):
            raise exceptions.ConfigError("output.dir", f"{target} already holds a run")
    except OSError as err:
        print(f"could not create the output directory: {err}", file=sys.stderr)
        return EXIT_IO
    except exceptions.ConfigError as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return EXIT_SOLVER

    outcome = RunOutcome(status="Completed", exit_code=EXIT_OK)
    try:
        _execute(config, target, outcome)
    except OSError as err:
        logger.error("I/O error: %s", err)
        outcome.status, outcome.exit_code = "IOError", EXIT_IO
        outcome.lines.append(("message", str(err)))
    except exceptions.BroadwellError as err:
        logger.error("%s", err)
        print(f"error: {err}", file=sys.stderr)
        outcome.status, outcome.exit_code = type(err).__name__, EXIT_SOLVER
        outcome.lines.append(("message", str(err)))

    try:
        outcome.series.to_csv(os.path.join(target, "series.csv"))
        _write_summary(config, outcome, target)
    except OSError as err:
        print(f"could not write outputs: {err}", file=sys.stderr)
        return EXIT_IO
    print(f"{config.mode}: {outcome.status} (exit {outcome.exit_code}), outputs in {target}")
    return outcome.exit_code


if __name__ == "__main__":  # pragma: no cover
    main()
