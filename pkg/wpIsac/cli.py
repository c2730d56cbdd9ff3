"""Command line front end for scenario generation, solves and parameter sweeps.

Every subcommand reads an optional experiment manifest (``--config``), a flat
``key=value`` file with dotted keys, and lets flags of the same names win.
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from wpIsac.algorithms.barrier import InnerSolverException
from wpIsac.algorithms.oracle import GridSpec, GridDimensionException, grid_search_solve
from wpIsac.algorithms.sca import SCHEMES, SolverConfig, Status, validate_report
from wpIsac.algorithms.utils import monotonicity_violations
from wpIsac.logs import configure_logging
from wpIsac.model.Scenario import (Scenario, SystemParams, DEFAULT_SEED, generate_scenario,
                                   InvalidParametersException, ScenarioGenerationException,
                                   DegenerateGeometryException)
from wpIsac.model.Sensing import build_tables

logger = logging.getLogger(__name__)

SCHEME_ORDER = ("proposed", "equal-time", "max-power")
SWEEP_AXES = ("eta", "p0")
FORMATS = ("csv", "json")
SWEEP_COLUMNS = ["axis_value", "scheme", "min_throughput_bits", "status", "iterations"]
SOLVE_COLUMNS = ["scheme", "status", "min_throughput_bits", "iterations"]
FAILED = "Failed"
MONOTONICITY_TOL = 1e-6

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INFEASIBLE = 2

PARAM_DEFAULTS = {f.name: f.default for f in fields(SystemParams)}
SOLVER_DEFAULTS = {f.name: f.default for f in fields(SolverConfig)}
_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


@dataclass
class ExperimentConfig:
    """One experiment: where the scenario comes from, which schemes run, what is swept and where results go.

    ``params`` and ``solver`` hold overrides of :class:`SystemParams` and
    :class:`SolverConfig` fields. ``format`` and ``jobs`` left as ``None``
    resolve per command.
    """
    seed: int = None
    scenario: str = None
    scheme: str = "all"
    sweep_axis: str = "none"
    sweep_values: tuple = ()
    out: str = None
    format: str = None
    jobs: int = None
    timing: bool = False
    params: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)

    def validate(self):
        if self.seed is not None and self.scenario is not None:
            err = "Give either a seed or a scenario file, not both"
            raise ExperimentConfigException(err)
        if self.seed is not None and self.seed < 0:
            err = "Seeds are unsigned, got " + str(self.seed)
            raise ExperimentConfigException(err)
        if self.scheme not in SCHEME_ORDER + ("all",):
            err = "Unknown scheme \"" + str(self.scheme) + "\", expected one of " + ", ".join(SCHEME_ORDER + ("all",))
            raise ExperimentConfigException(err)
        if self.sweep_axis not in SWEEP_AXES + ("none",):
            err = "Unknown sweep axis \"" + str(self.sweep_axis) + "\", expected eta, p0 or none"
            raise ExperimentConfigException(err)
        values = np.asarray(self.sweep_values, dtype=float)
        if np.any(values <= 0) or np.any(np.diff(values) <= 0):
            err = "Sweep values must be positive and strictly increasing, got " + str(list(self.sweep_values))
            raise ExperimentConfigException(err)
        if self.format is not None and self.format not in FORMATS:
            err = "Unknown output format \"" + str(self.format) + "\", expected csv or json"
            raise ExperimentConfigException(err)
        if self.jobs is not None and self.jobs < 1:
            err = "jobs must be at least 1, got " + str(self.jobs)
            raise ExperimentConfigException(err)

    @property
    def schemes(self) -> list:
        return list(SCHEME_ORDER) if self.scheme == "all" else [self.scheme]

    def build_scenario(self) -> Scenario:
        if self.scenario is not None:
            scenario = Scenario.load(self.scenario)
            return scenario.with_params(**self.params) if self.params else scenario
        seed = self.seed if self.seed is not None else DEFAULT_SEED
        return generate_scenario(seed, SystemParams(**self.params))

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)


def _coerce(key, raw, default):
    """Parses ``raw`` with the type of ``default``; non-strings pass through."""
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if "," in text:
            return tuple(float(part) for part in text.split(",") if part.strip())
        return float(text)
    except ValueError as exc:
        err = "Cannot parse \"" + key + "\" from \"" + raw + "\""
        raise ExperimentConfigException(err) from exc


def read_config_file(path) -> dict:
    """Raw ``key -> value`` strings of an experiment manifest."""
    entries = {}
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            err = str(path) + ":" + str(number) + ": expected key=value, got \"" + line + "\""
            raise ExperimentConfigException(err)
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def build_config(entries: dict) -> ExperimentConfig:
    """Typed, validated :class:`ExperimentConfig` from dotted ``key -> value`` entries."""
    config = ExperimentConfig()
    for key, raw in entries.items():
        if key.startswith("params."):
            name = key.split(".", 1)[1]
            if name not in PARAM_DEFAULTS:
                raise ExperimentConfigException("Unknown system parameter \"" + name + "\"")
            config.params[name] = _coerce(key, raw, PARAM_DEFAULTS[name])
        elif key.startswith("solver."):
            name = key.split(".", 1)[1]
            if name not in SOLVER_DEFAULTS:
                raise ExperimentConfigException("Unknown solver setting \"" + name + "\"")
            default = SOLVER_DEFAULTS[name]
            config.solver[name] = _coerce(key, raw, default if default is not None else 0.0)
        elif key == "seed":
            config.seed = _coerce(key, raw, 0)
        elif key == "jobs":
            config.jobs = _coerce(key, raw, 0)
        elif key == "timing":
            config.timing = _coerce(key, raw, False)
        elif key == "sweep.values":
            values = _coerce(key, raw, 0.0)
            config.sweep_values = tuple(np.atleast_1d(values).tolist())
        elif key == "sweep.axis":
            config.sweep_axis = str(raw).strip()
        elif key in ("scenario", "scheme", "out", "format"):
            setattr(config, key, str(raw).strip())
        else:
            raise ExperimentConfigException("Unknown configuration key \"" + key + "\"")
    config.validate()
    return config


def merge_entries(file_entries: dict, flag_entries: dict) -> dict:
    """Manifest entries overridden by flags; a scenario source given by flag replaces the manifest's."""
    merged = dict(file_entries)
    if "scenario" in flag_entries:
        merged.pop("seed", None)
    if "seed" in flag_entries:
        merged.pop("scenario", None)
    merged.update(flag_entries)
    return merged


def _write(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _exit_code(status: Status) -> int:
    if status == Status.CONVERGED:
        return EXIT_OK
    if status == Status.INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_FAILURE


def _combine(codes) -> int:
    if EXIT_FAILURE in codes:
        return EXIT_FAILURE
    if EXIT_INFEASIBLE in codes:
        return EXIT_INFEASIBLE
    return EXIT_OK


# COMMANDS
def cmd_generate(config: ExperimentConfig, options=None) -> int:
    _write(config.build_scenario().to_json(), config.out)
    return EXIT_OK


def cmd_dump_tables(config: ExperimentConfig, options=None) -> int:
    _write(build_tables(config.build_scenario()).to_json(), config.out)
    return EXIT_OK


def cmd_solve(config: ExperimentConfig, options=None) -> int:
    """One report per selected scheme, as a JSON list or a CSV summary."""
    scenario = config.build_scenario()
    solver = config.solver_config()
    reports, codes = [], []
    for scheme in config.schemes:
        try:
            report = SCHEMES[scheme](scenario, solver)
        except InnerSolverException as exc:
            logger.error("Solver failed: " + str(exc), extra={"scheme": scheme, "diagnostics": exc.diagnostics})
            codes.append(EXIT_FAILURE)
            continue
        reports.append(report)
        codes.append(_exit_code(report.status))

    solved = {r.scheme: r.min_throughput for r in reports if r.status != Status.INFEASIBLE}
    if "proposed" in solved:
        for scheme, value in solved.items():
            if value > solved["proposed"] * (1 + MONOTONICITY_TOL):
                logger.warning("A benchmark beats the proposed scheme",
                               extra={"scheme": scheme, "objective_bits": value, "proposed_bits": solved["proposed"]})

    if (config.format or "json") == "csv":
        frame = pd.DataFrame([{"scheme": r.scheme, "status": r.status.value,
                               "min_throughput_bits": r.min_throughput, "iterations": r.iterations}
                              for r in reports], columns=SOLVE_COLUMNS)
        _write(frame.to_csv(index=False, lineterminator="\n", na_rep="nan"), config.out)
    else:
        documents = [r.to_dict(include_timing=config.timing) for r in reports]
        for document in documents:
            validate_report(document)
        _write(json.dumps(documents, indent=2) + "\n", config.out)
    return _combine(codes)


def _solve_point(task) -> dict:
    """One sweep cell; failures become a row instead of an exception."""
    scenario, solver, axis, value, scheme = task
    row = {"axis_value": value, "scheme": scheme, "min_throughput_bits": float("nan"), "status": FAILED,
           "iterations": 0}
    try:
        report = SCHEMES[scheme](scenario.with_params(**{axis: value}), solver)
    except (InnerSolverException, InvalidParametersException) as exc:
        logger.error("Sweep point failed: " + str(exc), extra={"axis": axis, "axis_value": value, "scheme": scheme})
        return row
    row.update(min_throughput_bits=report.min_throughput, status=report.status.value, iterations=report.iterations)
    return row


def check_sweep_monotonicity(rows, rel_tol=MONOTONICITY_TOL) -> list:
    """Points where a scheme's min-throughput drops along the sweep axis.

    Infeasible and failed rows are skipped.
    """
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    frame = frame[~frame["status"].isin([Status.INFEASIBLE.value, FAILED])]
    violations = []
    for scheme, group in frame.groupby("scheme", sort=False):
        group = group.sort_values("axis_value", kind="stable")
        values = group["min_throughput_bits"].tolist()
        axis_values = group["axis_value"].tolist()
        for i in monotonicity_violations(values, rel_tol):
            violations.append({"scheme": scheme, "axis_value": axis_values[i], "previous_bits": values[i - 1],
                               "value_bits": values[i]})
    return violations


def cmd_sweep(config: ExperimentConfig, options=None) -> int:
    """Every (axis value, scheme) pair on one scenario, rows ordered by axis value then scheme."""
    if config.sweep_axis == "none" or not config.sweep_values:
        err = "A sweep needs an axis (eta or p0) and at least one value"
        raise ExperimentConfigException(err)
    scenario = config.build_scenario()
    solver = config.solver_config()
    tasks = [(scenario, solver, config.sweep_axis, value, scheme)
             for value in config.sweep_values for scheme in config.schemes]
    jobs = config.jobs if config.jobs is not None else (os.cpu_count() or 1)
    if jobs == 1:
        rows = [_solve_point(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_solve_point, tasks))

    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    if (config.format or "csv") == "csv":
        _write(frame.to_csv(index=False, lineterminator="\n", na_rep="nan"), config.out)
    else:
        _write(frame.to_json(orient="records", indent=2) + "\n", config.out)

    code = EXIT_FAILURE if (frame["status"] == FAILED).any() else EXIT_OK
    for violation in check_sweep_monotonicity(rows):
        logger.warning("Min-throughput decreases along the sweep axis",
                       extra=dict(violation, axis=config.sweep_axis))
        code = EXIT_FAILURE
    return code


def cmd_oracle(config: ExperimentConfig, options=None) -> int:
    """Grid search on a scenario with at most three users."""
    options = options or {}
    count = int(options.get("grid.count", 64))
    grid = GridSpec(t0_count=count, t_count=count, p_count=count,
                    refinements=int(options.get("grid.refinements", GridSpec.refinements)),
                    profile_durations=not options.get("grid.full", False))
    result = grid_search_solve(config.build_scenario(), grid)
    document = {
        "status": "Feasible" if result.success else "Infeasible",
        "min_throughput_bits": result.fun if result.success else None,
        "allocation": result.x.to_dict() if result.success else None,
        "evaluations": int(result.nfev),
    }
    _write(json.dumps(document, indent=2) + "\n", config.out)
    return EXIT_OK if result.success else EXIT_INFEASIBLE


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "dump-tables": cmd_dump_tables,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="experiment manifest of dotted key=value lines")
    common.add_argument("--seed", help="scenario seed (default " + str(DEFAULT_SEED) + ")")
    common.add_argument("--scenario", help="scenario JSON file instead of a seed")
    common.add_argument("--scheme", help="proposed, equal-time, max-power or all")
    common.add_argument("--sweep-axis", dest="sweep.axis", help="eta, p0 or none")
    common.add_argument("--sweep-values", dest="sweep.values", help="comma separated, increasing")
    common.add_argument("--out", help="output file, standard output when omitted")
    common.add_argument("--format", help="csv or json")
    common.add_argument("--jobs", help="sweep worker processes (default: number of processors)")
    common.add_argument("--timing", action="store_true", help="report wall-clock time per stage")
    common.add_argument("--max-outer-iters", dest="solver.max_outer_iters", help="SCA iteration cap")
    common.add_argument("--lambda-th", dest="solver.lambda_th", help="SCA relative improvement threshold")
    for name in PARAM_DEFAULTS:
        common.add_argument("--params." + name, dest="params." + name, metavar=name.upper())
    for name in SOLVER_DEFAULTS:
        common.add_argument("--solver." + name, dest="solver." + name, metavar=name.upper())

    parser = argparse.ArgumentParser(prog="wpIsac", description="Max-min throughput allocation for wireless "
                                                                "powered ISAC under localization constraints")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("generate", parents=[common], help="write a scenario file")
    commands.add_parser("solve", parents=[common], help="solve one scenario with the selected schemes")
    commands.add_parser("sweep", parents=[common], help="sweep eta or p0 over a scenario")
    commands.add_parser("dump-tables", parents=[common], help="write the sensing coefficient tables")
    oracle = commands.add_parser("oracle", parents=[common], help="grid search a scenario with at most 3 users")
    oracle.add_argument("--grid-count", dest="grid.count", type=int, default=argparse.SUPPRESS,
                        help="points per axis (default 64)")
    oracle.add_argument("--grid-refinements", dest="grid.refinements", type=int, default=argparse.SUPPRESS,
                        help="zoom passes around the incumbent")
    oracle.add_argument("--grid-full", dest="grid.full", action="store_true", default=argparse.SUPPRESS,
                        help="enumerate user durations instead of solving for them")
    return parser


def main(argv=None) -> int:
    configure_logging()
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    options = {key: args.pop(key) for key in list(args) if key.startswith("grid.")}
    try:
        entries = read_config_file(args.pop("config")) if "config" in args else {}
        config = build_config(merge_entries(entries, args))
        return COMMANDS[command](config, options)
    except (ExperimentConfigException, InvalidParametersException, ScenarioGenerationException,
            DegenerateGeometryException, GridDimensionException, OSError, ValueError) as exc:
        logger.error(type(exc).__name__ + ": " + str(exc))
        return EXIT_FAILURE


class ExperimentConfigException(Exception):
    pass
