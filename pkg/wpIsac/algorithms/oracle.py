"""Brute-force checks that stay independent of the log-domain solver.

:func:`grid_search_solve` only uses the natural-domain formulas of the
scenario and sensing modules; :func:`finite_diff_check` compares any analytic
derivative with central differences.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import OptimizeResult

from wpIsac.algorithms.utils import cartesian, zoom_axis
from wpIsac.model.Allocation import Allocation
from wpIsac.model.Scenario import Scenario, harvested_energy, throughput
from wpIsac.model.Sensing import build_tables, fn_value

logger = logging.getLogger(__name__)

MAX_GRID_USERS = 3
# Shortest default duration and smallest default power, relative to T and P_max
MIN_FRACTION = 1e-6


@dataclass(frozen=True)
class GridSpec:
    """Grid counts and ranges; ``None`` ranges span the admissible interval.

    Powers are spaced geometrically. With ``profile_durations`` only the
    powers are enumerated: for each power vector the best ``t0`` and user
    durations are computed exactly (clipped to ``t0_range`` when given).
    Otherwise ``t0`` and the durations are enumerated too; default ranges are
    spaced geometrically in ``T - t0`` and in ``t``, explicit ranges linearly.
    ``refinements`` re-grids that many times around the incumbent.
    """
    t0_count: int = 64
    t_count: int = 64
    p_count: int = 64
    t0_range: tuple = None
    t_range: tuple = None
    p_range: tuple = None
    profile_durations: bool = True
    refinements: int = 3
    feasibility_tol: float = 1e-9
    max_points: int = 20_000_000

    def validate(self):
        for name in ("t0_count", "t_count", "p_count"):
            if getattr(self, name) < 2:
                err = "Grid count \"" + name + "\" must be at least 2, got " + str(getattr(self, name))
                raise GridDimensionException(err)
        if self.refinements < 0 or self.feasibility_tol < 0:
            err = "Grid refinements and feasibility tolerance must be non-negative"
            raise GridDimensionException(err)

    def _range(self, name, bound):
        lo, hi = getattr(self, name)
        if not (0 < lo <= hi <= bound):
            err = "Grid range \"" + name + "\" must lie within (0, " + str(bound) + "], got " + str((lo, hi))
            raise GridDimensionException(err)
        return lo, hi

    def t0_bounds(self, params):
        """Interval the profiled ``t0`` is clipped to."""
        if self.t0_range is None:
            return 0.0, params.t_max
        return self._range("t0_range", params.t_max)

    def axes(self, params):
        """``(t0_axis, t_axis, p_axis)`` for the given system parameters."""
        T, p_max = params.t_max, params.p_max
        if self.t0_range is None:
            t0_axis = np.sort(T - np.geomspace(MIN_FRACTION * T, (1 - 1e-3) * T, self.t0_count))
        else:
            t0_axis = np.linspace(*self._range("t0_range", T), self.t0_count)
        if self.t_range is None:
            t_axis = np.geomspace(MIN_FRACTION * T, T, self.t_count)
        else:
            t_axis = np.linspace(*self._range("t_range", T), self.t_count)
        p_range = self._range("p_range", p_max) if self.p_range is not None else (MIN_FRACTION * p_max, p_max)
        return t0_axis, t_axis, np.geomspace(*p_range, self.p_count)

    def num_points(self, num_users) -> int:
        if self.profile_durations:
            return self.p_count ** num_users
        return self.t0_count * (self.p_count * self.t_count) ** num_users


def _rates(scenario: Scenario, p):
    """Bits per second of every user at powers ``p`` (batch ``(..., M)``)."""
    params = scenario.params
    return throughput(1.0, p, scenario.h_bs_user, params.sigma2, params.bandwidth)


def _localizes(scenario: Scenario, tables, p):
    params = scenario.params
    ok = np.ones(p.shape[:-1], dtype=bool)
    for n in range(scenario.num_targets):
        ok &= fn_value(p, tables, params.eta, params.p0, n) <= 0
    return ok


def _profiled_pass(scenario: Scenario, tables, p_axes, t0_bounds):
    """Best ``(objective, t0, t, p)`` over the power grid, ``t0`` and durations solved exactly.

    For fixed ``p`` every user delivering ``z`` bits needs ``z / r_m`` seconds,
    so ``z(t0) = min(a t0, (T - t0) / S)`` with ``a`` the tightest
    energy-limited rate per second of charging and ``S = sum 1 / r_m``. The
    maximum sits where both lines meet, ``t0 = T / (1 + a S)``.
    """
    params = scenario.params
    P = cartesian(p_axes)
    count = len(P)
    P = P[_localizes(scenario, tables, P)]
    if len(P) == 0:
        return (-np.inf, None, None, None), count
    rates = _rates(scenario, P)
    inverse_rate_sum = np.sum(1.0 / rates, axis=1)
    energy_rate = harvested_energy(1.0, params.p0, np.asarray(params.zeta), scenario.h_bs_user)
    slope = np.min(rates * energy_rate / P, axis=1)
    t0 = np.clip(params.t_max / (1.0 + slope * inverse_rate_sum), *t0_bounds)
    z = np.minimum(slope * t0, (params.t_max - t0) / inverse_rate_sum)
    k = int(np.argmax(z))
    return (float(z[k]), float(t0[k]), z[k] / rates[k], P[k]), count


def _full_pass(scenario: Scenario, tables, t0_axis, t_axes, p_axes, tol):
    """Best ``(objective, t0, t, p)`` with ``t0`` and durations enumerated on their own axes."""
    params = scenario.params
    m_users = scenario.num_users
    zeta = np.asarray(params.zeta)
    points = cartesian(list(t_axes) + list(p_axes))
    count = len(t0_axis) * len(points)
    t, P = points[:, :m_users], points[:, m_users:]
    keep = _localizes(scenario, tables, P)
    t, P = t[keep], P[keep]
    best = (-np.inf, None, None, None)
    if len(P) == 0:
        return best, count
    bits = throughput(t, P, scenario.h_bs_user, params.sigma2, params.bandwidth)
    objective = np.min(bits, axis=1)
    for t0 in t0_axis:
        energy = harvested_energy(t0, params.p0, zeta, scenario.h_bs_user)
        feasible = (t0 + np.sum(t, axis=1) <= params.t_max * (1 + tol)) & \
                   np.all(t * P <= energy * (1 + tol), axis=1)
        if not np.any(feasible):
            continue
        candidates = np.where(feasible, objective, -np.inf)
        k = int(np.argmax(candidates))
        if candidates[k] > best[0]:
            best = (float(candidates[k]), float(t0), t[k], P[k])
    return best, count


def _nearest(axis, value):
    return int(np.argmin(np.abs(axis - value)))


def _zoom(axis, value, count, geometric):
    lo, hi = zoom_axis(axis, _nearest(axis, value))
    return np.geomspace(lo, hi, count) if geometric else np.linspace(lo, hi, count)


def grid_search_solve(scenario: Scenario, grid: GridSpec = None) -> OptimizeResult:
    """Exhaustive max-min throughput search over a grid of allocations.

    Parameters
    ----------
    scenario : Scenario
        Instance with at most three users.
    grid : GridSpec, optional
        Grid layout, 64 points per axis by default.

    Returns
    -------
    OptimizeResult
        ``x`` is the best feasible :class:`Allocation` (``None`` when no grid
        point is feasible), ``fun`` its minimum user throughput in bits,
        ``success`` whether a feasible point was found and ``nfev`` the number
        of evaluated grid points, localizing or not.
    """
    grid = grid if grid is not None else GridSpec()
    grid.validate()
    m_users = scenario.num_users
    if m_users > MAX_GRID_USERS:
        err = "Grid search supports at most " + str(MAX_GRID_USERS) + " users, got " + str(m_users)
        raise GridDimensionException(err)
    if grid.num_points(m_users) > grid.max_points:
        err = "Grid of " + str(grid.num_points(m_users)) + " points exceeds the cap of " + str(grid.max_points)
        raise GridDimensionException(err)

    params = scenario.params
    tables = build_tables(scenario)
    t0_axis, t_axis, p_axis = grid.axes(params)
    t0_bounds = grid.t0_bounds(params)
    t_axes = [t_axis] * m_users
    p_axes = [p_axis] * m_users
    geometric_t = grid.t_range is None
    best = (-np.inf, None, None, None)
    evaluations = 0
    for stage in range(grid.refinements + 1):
        if grid.profile_durations:
            candidate, count = _profiled_pass(scenario, tables, p_axes, t0_bounds)
        else:
            candidate, count = _full_pass(scenario, tables, t0_axis, t_axes, p_axes, grid.feasibility_tol)
        evaluations += count
        if candidate[0] > best[0]:
            best = candidate
        logger.debug("Grid pass done", extra={"stage": stage, "points": count, "objective_bits": best[0]})
        if best[1] is None:
            break

        _, t0, t, p = best
        p_axes = [_zoom(axis, p[m], grid.p_count, True) for m, axis in enumerate(p_axes)]
        if not grid.profile_durations:
            t0_axis = _zoom(t0_axis, t0, grid.t0_count, False)
            t_axes = [_zoom(axis, t[m], grid.t_count, geometric_t) for m, axis in enumerate(t_axes)]

    if best[1] is None:
        return OptimizeResult(x=None, fun=float("nan"), success=False, status=2, message="Infeasible",
                              nfev=evaluations)
    objective, t0, t, p = best
    return OptimizeResult(x=Allocation(t0=t0, t=t, p=p), fun=objective, success=True, status=0,
                          message="Best feasible grid point", nfev=evaluations)


def finite_diff_check(function, point, h=1e-6, floor=1.0) -> float:
    """Largest per-coordinate relative gap between an analytic gradient and central differences.

    ``function(x)`` returns ``(value, gradient)``. Gradient entries smaller
    than ``floor`` in magnitude are compared against ``floor`` instead.
    """
    point = np.array(point, dtype=float, ndmin=1)
    _, analytic = function(point)
    analytic = np.array(analytic, dtype=float, ndmin=1)
    numeric = np.zeros_like(point)
    for i in range(len(point)):
        step = np.zeros_like(point)
        step[i] = h
        numeric[i] = (float(function(point + step)[0]) - float(function(point - step)[0])) / (2 * h)
    return float(np.max(np.abs(numeric - analytic) / np.maximum(np.abs(analytic), floor)))


class GridDimensionException(Exception):
    pass
