import math

import numpy as np
import pytest
import jsonschema

from wpIsac.algorithms.oracle import grid_search_solve
from wpIsac.algorithms.sca import (SCHEMES, SolverConfig, SolveReport, Status, init_feasible, sca_solve,
                                   solve_equal_time, solve_max_power, validate_report)
from wpIsac.model.Allocation import Allocation, from_log_domain, audit_allocation
from wpIsac.model.Scenario import SystemParams, InvalidParametersException, scenario_from_geometry
from wpIsac.model.Sensing import build_tables, fn_value

DOMINANCE_SLACK = 1e-6


@pytest.fixture(scope="module")
def default_reports(default_scenario):
    return {scheme: solve(default_scenario) for scheme, solve in SCHEMES.items()}


def _assert_monotone(trace):
    for previous, current in zip(trace, trace[1:]):
        assert current >= previous - 1e-9, f"trace decreased from {previous} to {current}"


def test_init_feasible_on_the_default_scenario(default_scenario, default_tables):
    point = init_feasible(default_scenario, default_tables)
    assert not isinstance(point, Status)
    alloc = from_log_domain(point)
    audit = audit_allocation(default_scenario, default_tables, alloc)
    assert max(audit.values()) < 0, audit
    params = default_scenario.params
    for n in range(default_scenario.num_targets):
        assert fn_value(alloc.p, default_tables, params.eta, params.p0, n) < 0


def test_init_feasible_without_binding_localization(default_scenario):
    scenario = default_scenario.with_params(eta=1e6)
    params = scenario.params
    point = init_feasible(scenario, build_tables(scenario))
    alloc = from_log_domain(point)
    assert alloc.t0 == params.t_max / 2
    assert np.allclose(alloc.p, params.p_max * (1 - 1e-3))
    assert alloc.t.sum() < params.t_max / 2


def test_tiny_eta_is_infeasible_for_every_scheme(default_scenario):
    scenario = default_scenario.with_params(eta=1e-9)
    assert init_feasible(scenario, build_tables(scenario)) is Status.INFEASIBLE
    for solve in (sca_solve, solve_equal_time, solve_max_power):
        report = solve(scenario)
        assert report.status == Status.INFEASIBLE
        assert report.objective_trace == [] and report.allocation is None
        assert math.isnan(report.min_throughput)
        validate_report(report.to_dict())


def test_default_scenario_converges_quickly(default_scenario, default_tables, default_reports):
    report = default_reports["proposed"]
    assert report.status == Status.CONVERGED
    assert 2 <= len(report.objective_trace) <= 31
    _assert_monotone(report.objective_trace)
    assert max(report.audit.values()) <= 1e-6, report.audit
    assert report.allocation.is_feasible(default_scenario, default_tables)
    assert min(report.throughput_per_user) == pytest.approx(report.min_throughput, rel=1e-12)
    assert len(report.crb_per_target) == default_scenario.num_targets
    assert all(0 < crb <= default_scenario.params.eta * (1 + 1e-5) for crb in report.crb_per_target)


def test_benchmarks_never_beat_the_proposed_scheme(default_reports):
    proposed = default_reports["proposed"].min_throughput
    for scheme in ("equal-time", "max-power"):
        report = default_reports[scheme]
        assert report.status == Status.CONVERGED
        _assert_monotone(report.objective_trace)
        assert max(report.audit.values()) <= 1e-6, report.audit
        assert report.min_throughput <= proposed * (1 + DOMINANCE_SLACK), scheme


@pytest.mark.parametrize("seed", range(10))
def test_dominance_on_seeded_default_instances(scenario_factory, seed):
    scenario = scenario_factory(seed, num_users=10, num_targets=10)
    reports = {scheme: solve(scenario) for scheme, solve in SCHEMES.items()}
    proposed = reports["proposed"].min_throughput
    for scheme in ("equal-time", "max-power"):
        if reports[scheme].status != Status.INFEASIBLE:
            assert reports[scheme].min_throughput <= proposed * (1 + DOMINANCE_SLACK), scheme


def test_single_user_matches_the_grid_oracle(single_user_scenario):
    report = sca_solve(single_user_scenario)
    oracle = grid_search_solve(single_user_scenario)
    assert report.status == Status.CONVERGED and oracle.success
    assert report.min_throughput == pytest.approx(oracle.fun, rel=2e-2)
    assert report.min_throughput >= oracle.fun * (1 - 2e-2)


def test_loose_localization_makes_energy_causality_tight(single_user_scenario):
    scenario = single_user_scenario.with_params(eta=1e6)
    params = scenario.params
    report = sca_solve(scenario)
    oracle = grid_search_solve(scenario)
    assert report.status == Status.CONVERGED and oracle.success
    alloc = report.allocation
    energy = params.zeta[0] * scenario.h_bs_user[0] * params.p0 * alloc.t0
    assert alloc.t[0] * alloc.p[0] == pytest.approx(energy, rel=1e-5)
    assert report.min_throughput == pytest.approx(oracle.fun, rel=1e-2)


@pytest.mark.parametrize("seed", range(10))
def test_oracle_equivalence_on_seeded_instances(scenario_factory, seed):
    scenario = scenario_factory(seed, num_users=1 + seed % 2, num_targets=1 + (seed // 2) % 2)
    report = sca_solve(scenario)
    oracle = grid_search_solve(scenario)
    if report.status == Status.INFEASIBLE:
        assert not oracle.success
        return
    assert report.status == Status.CONVERGED and oracle.success
    assert report.min_throughput >= oracle.fun * (1 - 2e-2)
    assert report.min_throughput == pytest.approx(oracle.fun, rel=2e-2)


def test_symmetric_users_need_no_individual_durations():
    params = SystemParams(num_users=2, num_targets=1, eta=1e6)
    scenario = scenario_from_geometry(params, [[3.0, 0.0], [-3.0, 0.0]], [[0.0, 4.0]])
    proposed, equal = sca_solve(scenario), solve_equal_time(scenario)
    assert equal.min_throughput == pytest.approx(proposed.min_throughput, rel=1e-5)
    assert np.allclose(proposed.allocation.t, proposed.allocation.t[0], rtol=1e-4)


def test_max_power_equalizes_user_throughput(two_user_scenario):
    report = solve_max_power(two_user_scenario)
    assert report.status == Status.CONVERGED
    assert len(report.objective_trace) == 2
    assert np.allclose(report.allocation.p, two_user_scenario.params.p_max)
    bits = np.asarray(report.throughput_per_user)
    assert bits.max() == pytest.approx(bits.min(), rel=1e-3)
    assert report.min_throughput <= sca_solve(two_user_scenario).min_throughput * (1 + DOMINANCE_SLACK)


def test_outer_iteration_cap(single_user_scenario):
    report = sca_solve(single_user_scenario, SolverConfig(max_outer_iters=1, lambda_th=1e-300))
    assert report.status == Status.MAX_ITERS
    assert len(report.objective_trace) == 2
    assert report.iterations == 1


@pytest.mark.parametrize("changes", [
    {"barrier_mu": 1.0}, {"line_search_alpha": 0.6}, {"line_search_beta": 1.0}, {"newton_max_iters": 0},
    {"gap_target": 0.0}, {"lambda_th": -1.0}, {"init_margin": 1.0},
])
def test_invalid_solver_settings(changes):
    with pytest.raises(InvalidParametersException):
        SolverConfig(**changes)


def test_report_serialization(default_reports):
    report = default_reports["proposed"]
    document = report.to_dict()
    validate_report(document)
    assert list(document) == ["scheme", "status", "objective_trace", "allocation", "throughput_per_user",
                              "crb_per_target", "timing_ms"]
    assert document["timing_ms"] == {}
    timed = report.to_dict(include_timing=True)
    validate_report(timed)
    assert {"init", "sca", "report"} <= set(timed["timing_ms"])


def test_singular_crb_serializes_as_null():
    report = SolveReport(scheme="proposed", status=Status.CONVERGED, objective_trace=[1.0, 2.0],
                         allocation=Allocation(t0=1.0, t=[1.0], p=[1.0]), throughput_per_user=[2.0],
                         crb_per_target=[math.inf, 0.5])
    document = report.to_dict()
    assert document["crb_per_target"] == [None, 0.5]
    validate_report(document)
    document["status"] = "Done"
    with pytest.raises(jsonschema.ValidationError):
        validate_report(document)
