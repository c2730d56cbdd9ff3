import numpy as np
import pytest

from wpIsac.algorithms.barrier import (solve_subproblem, InfeasibleStartException, MaxNewtonItersException,
                                       InnerSolverException)
from wpIsac.algorithms.reformulation import build_subproblem, log_throughput
from wpIsac.algorithms.sca import SolverConfig, init_feasible
from wpIsac.model.Residual import VariableLayout
from wpIsac.model.Scenario import throughput
from wpIsac.model.Sensing import build_tables


def _start(scenario, layout, t0, u, v):
    params = scenario.params
    logs = [log_throughput(u[m], v[m], scenario.h_bs_user[m], params.sigma2, params.bandwidth)
            for m in range(scenario.num_users)]
    return layout.pack(t0, u, v, min(logs) - 1.0)


def test_box_only_subproblem_gives_full_power_and_equal_throughput(two_user_scenario):
    scenario = two_user_scenario
    params = scenario.params
    tables = build_tables(scenario)
    constraints = build_subproblem(scenario, tables, np.zeros(2), energy=False, crb=False)
    start = _start(scenario, constraints.layout, 1.0, np.zeros(2), np.zeros(2))
    result = solve_subproblem(constraints, start, SolverConfig())

    t0, u, v, s = constraints.layout.split(result.x)
    assert np.allclose(v, np.log(params.p_max), atol=1e-6)
    assert t0 < 1e-6
    rates = throughput(1.0, params.p_max, scenario.h_bs_user, params.sigma2, params.bandwidth)
    best = params.t_max / np.sum(1.0 / rates)
    bits = throughput(np.exp(u), np.exp(v), scenario.h_bs_user, params.sigma2, params.bandwidth)
    assert bits.min() == pytest.approx(best, rel=1e-6)
    # the weaker link gets the longer slot
    assert np.argmax(np.exp(u)) == np.argmin(rates)
    assert result.gap <= 1e-8 * constraints.num_barrier_terms
    assert constraints.is_strictly_feasible(result.x)
    assert result.fun == pytest.approx(s)


def test_single_user_subproblem_improves_a_feasible_start(single_user_scenario):
    scenario = single_user_scenario.with_params(eta=1e6)
    tables = build_tables(scenario)
    point = init_feasible(scenario, tables)
    constraints = build_subproblem(scenario, tables, point.v)
    start = _start(scenario, constraints.layout, point.t0, point.u, point.v)
    result = solve_subproblem(constraints, start, SolverConfig())

    assert constraints.is_strictly_feasible(result.x)
    assert result.fun > start[-1]
    assert result.gap <= 1e-8 * constraints.num_barrier_terms
    crb = [r for r in constraints.residuals if r.kind == "crb"][0]
    assert crb.value(result.x) < 0


def test_infeasible_start_is_rejected(two_user_scenario):
    tables = build_tables(two_user_scenario)
    constraints = build_subproblem(two_user_scenario, tables, np.zeros(2))
    # twice the time budget
    start = _start(two_user_scenario, constraints.layout, 1.0, np.log([10.0, 10.0]), np.zeros(2))
    with pytest.raises(InfeasibleStartException) as info:
        solve_subproblem(constraints, start, SolverConfig())
    assert info.value.diagnostics["max_residual"] > 0
    assert isinstance(info.value, InnerSolverException)


def test_newton_iteration_cap_surfaces_diagnostics(two_user_scenario):
    tables = build_tables(two_user_scenario)
    point = init_feasible(two_user_scenario, tables)
    constraints = build_subproblem(two_user_scenario, tables, point.v)
    start = _start(two_user_scenario, constraints.layout, point.t0, point.u, point.v)
    with pytest.raises(MaxNewtonItersException) as info:
        solve_subproblem(constraints, start, SolverConfig(newton_max_iters=1))
    assert info.value.diagnostics["newton_steps"] == 1
    assert "t_barrier" in info.value.diagnostics


def test_tied_durations_stay_tied(two_user_scenario):
    tables = build_tables(two_user_scenario)
    layout = VariableLayout.equal_time(2)
    point = init_feasible(two_user_scenario, tables)
    u = np.full(2, point.u.min())
    constraints = build_subproblem(two_user_scenario, tables, point.v, layout=layout)
    result = solve_subproblem(constraints, _start(two_user_scenario, layout, point.t0, u, point.v), SolverConfig())
    _, u_final, _, _ = layout.split(result.x)
    assert u_final[0] == u_final[1]
    assert result.x.shape == (layout.dim,)
