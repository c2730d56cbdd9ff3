"""Successive convex approximation for the max-min throughput allocation,
plus the two benchmark schemes (equal ISAC time, maximum transmit power)."""
import json
import logging
import time
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path

import jsonschema
import numpy as np

from wpIsac.algorithms.barrier import solve_subproblem
from wpIsac.algorithms.reformulation import build_subproblem, log_throughput, T0_FLOOR
from wpIsac.algorithms.utils import relative_change
from wpIsac.model.Allocation import Allocation, LogPoint, to_log_domain, from_log_domain, audit_allocation
from wpIsac.model.Residual import VariableLayout
from wpIsac.model.Scenario import Scenario, InvalidParametersException, harvested_energy, throughput
from wpIsac.model.Sensing import SensingTables, SINGULAR, build_tables, fim, crb_trace, fn_value

logger = logging.getLogger(__name__)

SCHEMA_PATH = Path(__file__).resolve().parents[1] / "schemas" / "solve_report.schema.json"
AUDIT_TOLERANCE = 1e-6


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class SolverConfig:
    """Inner barrier solver and outer SCA loop settings.

    ``lambda_th`` left as ``None`` falls back to the scenario's threshold.
    """
    barrier_t0: float = 1.0
    barrier_mu: float = 10.0
    gap_target: float = 1e-8
    newton_tol: float = 1e-9
    newton_max_iters: int = 200
    line_search_alpha: float = 0.25
    line_search_beta: float = 0.5
    line_search_max_iters: int = 100
    stall_tolerance: float = 1e-6
    lambda_th: float = None
    max_outer_iters: int = 100
    t0_floor: float = T0_FLOOR
    init_attempts: int = 64
    init_margin: float = 1e-3

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("barrier_t0", "gap_target", "newton_tol", "stall_tolerance", "t0_floor", "init_margin"):
            if not getattr(self, name) > 0:
                err = "Solver setting \"" + name + "\" must be positive, got " + str(getattr(self, name))
                raise InvalidParametersException(err)
        if self.lambda_th is not None and not self.lambda_th > 0:
            err = "Solver setting \"lambda_th\" must be positive, got " + str(self.lambda_th)
            raise InvalidParametersException(err)
        if not self.barrier_mu > 1:
            err = "The barrier multiplier must exceed 1, got " + str(self.barrier_mu)
            raise InvalidParametersException(err)
        if not (0 < self.line_search_alpha < 0.5) or not (0 < self.line_search_beta < 1):
            err = "Backtracking needs 0 < alpha < 0.5 and 0 < beta < 1"
            raise InvalidParametersException(err)
        if not (0 < self.init_margin < 1):
            err = "init_margin must lie in (0, 1), got " + str(self.init_margin)
            raise InvalidParametersException(err)
        for name in ("newton_max_iters", "line_search_max_iters", "max_outer_iters", "init_attempts"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                err = "Solver setting \"" + name + "\" must be a positive integer, got " + str(getattr(self, name))
                raise InvalidParametersException(err)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveReport:
    """Outcome of one scheme on one scenario.

    ``objective_trace`` holds the minimum user throughput in bits at the start
    point and after every accepted outer iteration.
    """
    scheme: str
    status: Status
    objective_trace: list = field(default_factory=list)
    allocation: Allocation = None
    throughput_per_user: list = field(default_factory=list)
    crb_per_target: list = field(default_factory=list)
    timing_ms: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return max(len(self.objective_trace) - 1, 0)

    @property
    def min_throughput(self) -> float:
        if self.status == Status.INFEASIBLE or not self.objective_trace:
            return float("nan")
        return self.objective_trace[-1]

    def to_dict(self, include_timing=False) -> dict:
        return {
            "scheme": self.scheme,
            "status": self.status.value,
            "objective_trace": [float(v) for v in self.objective_trace],
            "allocation": self.allocation.to_dict() if self.allocation is not None else None,
            "throughput_per_user": [float(v) for v in self.throughput_per_user],
            "crb_per_target": [None if v == SINGULAR else float(v) for v in self.crb_per_target],
            "timing_ms": dict(self.timing_ms) if include_timing else {},
        }


def load_report_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text())


def validate_report(document: dict):
    """Raises ``jsonschema.ValidationError`` when ``document`` breaks the shipped report schema."""
    jsonschema.validate(instance=document, schema=load_report_schema())


def min_throughput(scenario: Scenario, alloc: Allocation) -> float:
    params = scenario.params
    return float(np.min(throughput(alloc.t, alloc.p, scenario.h_bs_user, params.sigma2, params.bandwidth)))


def _milliseconds(since):
    return 1e3 * (time.perf_counter() - since)


def _epigraph_start(layout: VariableLayout, scenario: Scenario, t0, u, v):
    """Flat start vector whose epigraph variable sits one log-unit below the weakest user."""
    params = scenario.params
    logs = [log_throughput(u[m], v[m], scenario.h_bs_user[m], params.sigma2, params.bandwidth)
            for m in range(scenario.num_users)]
    return layout.pack(t0, u, v, min(logs) - 1.0)


def _recover(layout: VariableLayout, x) -> Allocation:
    t0, u, v, _ = layout.split(x)
    return from_log_domain(LogPoint(t0=t0, u=u, v=v))


def _report(scheme, status, trace, alloc, scenario: Scenario, tables: SensingTables, timing) -> SolveReport:
    if alloc is None:
        return SolveReport(scheme=scheme, status=status, objective_trace=list(trace), timing_ms=timing)
    params = scenario.params
    audit = audit_allocation(scenario, tables, alloc)
    if max(audit.values()) > AUDIT_TOLERANCE:
        logger.warning("Final allocation fails the feasibility audit", extra={"scheme": scheme, "audit": audit})
    return SolveReport(
        scheme=scheme, status=status, objective_trace=list(trace), allocation=alloc,
        throughput_per_user=throughput(alloc.t, alloc.p, scenario.h_bs_user, params.sigma2,
                                       params.bandwidth).tolist(),
        crb_per_target=[crb_trace(fim(alloc.p, params.p0, tables, n)) for n in range(scenario.num_targets)],
        timing_ms=timing, audit=audit)


def init_feasible(scenario: Scenario, tables: SensingTables, config: SolverConfig = None):
    """Strictly feasible start, or ``Status.INFEASIBLE`` when the power heuristic fails.

    Powers start just below the cap; if a localization constraint is violated
    there, up to ``config.init_attempts`` random power vectors in ``(0, P_max]``
    are tried. Half the time budget goes to power transfer and each user gets
    the smaller of an equal share of the rest and what its harvested energy
    sustains, both shrunk by ``init_margin``.
    """
    config = config if config is not None else SolverConfig()
    params = scenario.params
    m_users = scenario.num_users
    shrink = 1.0 - config.init_margin

    def localizes(p):
        return all(fn_value(p, tables, params.eta, params.p0, n) < 0 for n in range(scenario.num_targets))

    p = np.full(m_users, params.p_max * shrink)
    if not localizes(p):
        rng = np.random.Generator(np.random.PCG64(scenario.seed))
        for _ in range(config.init_attempts):
            p = params.p_max * shrink * (1.0 - rng.random(m_users))
            if localizes(p):
                break
        else:
            logger.info("No power vector meets the localization constraints", extra={"seed": scenario.seed})
            return Status.INFEASIBLE

    t0 = params.t_max / 2
    energy = harvested_energy(t0, params.p0, np.asarray(params.zeta), scenario.h_bs_user)
    t = np.minimum(params.t_max / (2 * m_users), energy / p) * shrink
    return to_log_domain(Allocation(t0=t0, t=t, p=p))


def _run_sca(scheme, scenario: Scenario, tables: SensingTables, layout: VariableLayout, x, config: SolverConfig,
             timing) -> SolveReport:
    clock = time.perf_counter()
    lambda_th = config.lambda_th if config.lambda_th is not None else scenario.params.lambda_th
    trace = [min_throughput(scenario, _recover(layout, x))]
    status = Status.MAX_ITERS
    for r in range(1, config.max_outer_iters + 1):
        t0, u, v, _ = layout.split(x)
        constraints = build_subproblem(scenario, tables, v, layout=layout, t0_floor=config.t0_floor)
        result = solve_subproblem(constraints, _epigraph_start(layout, scenario, t0, u, v), config)
        value = min_throughput(scenario, _recover(layout, result.x))
        improvement = relative_change(value, trace[-1])
        if value < trace[-1]:
            logger.warning("Subproblem solution worse than the incumbent, keeping the incumbent",
                           extra={"scheme": scheme, "iteration": r, "objective_bits": value,
                                  "incumbent_bits": trace[-1]})
            status = Status.CONVERGED
            break
        x = result.x
        trace.append(value)
        logger.info("SCA iteration", extra={"scheme": scheme, "iteration": r, "objective_bits": value,
                                            "improvement": improvement, "newton_steps": result.nit})
        if improvement < lambda_th:
            status = Status.CONVERGED
            break
    timing["sca"] = _milliseconds(clock)
    clock = time.perf_counter()
    report = _report(scheme, status, trace, _recover(layout, x), scenario, tables, timing)
    timing["report"] = _milliseconds(clock)
    return report


def sca_solve(scenario: Scenario, config: SolverConfig = None) -> SolveReport:
    """Joint optimization of the power transfer duration, user durations and powers."""
    config = config if config is not None else SolverConfig()
    clock = time.perf_counter()
    tables = build_tables(scenario)
    point = init_feasible(scenario, tables, config)
    timing = {"init": _milliseconds(clock)}
    if isinstance(point, Status):
        return _report("proposed", Status.INFEASIBLE, [], None, scenario, tables, timing)
    layout = VariableLayout.independent(scenario.num_users)
    x = _epigraph_start(layout, scenario, point.t0, point.u, point.v)
    return _run_sca("proposed", scenario, tables, layout, x, config, timing)


def solve_equal_time(scenario: Scenario, config: SolverConfig = None) -> SolveReport:
    """Same loop with one duration shared by every user."""
    config = config if config is not None else SolverConfig()
    clock = time.perf_counter()
    tables = build_tables(scenario)
    point = init_feasible(scenario, tables, config)
    timing = {"init": _milliseconds(clock)}
    if isinstance(point, Status):
        return _report("equal-time", Status.INFEASIBLE, [], None, scenario, tables, timing)
    layout = VariableLayout.equal_time(scenario.num_users)
    u = np.full(scenario.num_users, np.min(point.u))
    x = _epigraph_start(layout, scenario, point.t0, u, point.v)
    return _run_sca("equal-time", scenario, tables, layout, x, config, timing)


def solve_max_power(scenario: Scenario, config: SolverConfig = None) -> SolveReport:
    """Every user transmits at ``P_max``; durations and ``t0`` are optimized.

    With the powers fixed the localization constraints are constants, checked
    once, and the remaining problem is convex, so a single inner solve suffices.
    """
    config = config if config is not None else SolverConfig()
    clock = time.perf_counter()
    params = scenario.params
    m_users = scenario.num_users
    tables = build_tables(scenario)
    p = np.full(m_users, params.p_max)
    if any(fn_value(p, tables, params.eta, params.p0, n) > 0 for n in range(scenario.num_targets)):
        logger.info("Maximum power violates a localization constraint", extra={"seed": scenario.seed})
        return _report("max-power", Status.INFEASIBLE, [], None, scenario, tables, {"init": _milliseconds(clock)})

    v = np.log(p)
    layout = VariableLayout.fixed_power(m_users, v)
    t0 = params.t_max / 2
    energy = harvested_energy(t0, params.p0, np.asarray(params.zeta), scenario.h_bs_user)
    t = np.minimum(params.t_max / (2 * m_users), energy / p) * (1.0 - config.init_margin)
    x = _epigraph_start(layout, scenario, t0, np.log(t), v)
    timing = {"init": _milliseconds(clock)}

    clock = time.perf_counter()
    trace = [min_throughput(scenario, _recover(layout, x))]
    constraints = build_subproblem(scenario, tables, v, layout=layout, t0_floor=config.t0_floor)
    result = solve_subproblem(constraints, x, config)
    value = min_throughput(scenario, _recover(layout, result.x))
    if value >= trace[-1]:
        x = result.x
        trace.append(value)
    timing["sca"] = _milliseconds(clock)
    return _report("max-power", Status.CONVERGED, trace, _recover(layout, x), scenario, tables, timing)


SCHEMES = {
    "proposed": sca_solve,
    "equal-time": solve_equal_time,
    "max-power": solve_max_power,
}
