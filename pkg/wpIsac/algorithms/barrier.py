"""Log-barrier path following for the convex subproblems.

Minimizes ``-s`` over the strict interior of a :class:`ConstraintSet` by
centering ``t * (-s) - sum log(-g_k)`` with damped Newton steps for an
increasing barrier parameter ``t``, until the duality gap bound ``k / t`` drops
below ``gap_target * k``.
"""
import logging

import numpy as np
import scipy.linalg
from scipy.optimize import OptimizeResult

from wpIsac.model.Residual import ConstraintSet

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


def _barrier_value(constraints: ConstraintSet, c, x, t):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return t * (c @ x) - np.sum(np.log(-constraints.values(x)))


def _barrier_derivatives(constraints: ConstraintSet, c, x, t):
    values, gradients, hessians = constraints.evaluate(x)
    weights = 1.0 / -values
    gradient = t * c + gradients.T @ weights
    hessian = (gradients.T * weights ** 2) @ gradients + np.tensordot(weights, hessians, axes=1)
    return gradient, hessian


def _newton_direction(gradient, hessian):
    """Solves ``H dx = -g``, regularizing ``H`` when it is numerically indefinite."""
    shift = 0.0
    scale = max(1.0, np.max(np.abs(np.diag(hessian))))
    for _ in range(20):
        try:
            factor = scipy.linalg.cho_factor(hessian + shift * np.eye(len(gradient)))
            return scipy.linalg.cho_solve(factor, -gradient)
        except scipy.linalg.LinAlgError:
            shift = 1e-12 * scale if shift == 0.0 else 10 * shift
    return np.linalg.lstsq(hessian, -gradient, rcond=None)[0]


def _backtracking_line_search(constraints: ConstraintSet, c, x, t, dx, slope, config):
    """Largest ``beta^k`` keeping the point strictly feasible and satisfying Armijo.

    Returns ``None`` when no such step exists within ``config.line_search_max_iters`` cuts.
    """
    f0 = _barrier_value(constraints, c, x, t)
    # Armijo slack of a few roundoff units of the barrier value
    slack = 64 * _EPS * max(1.0, abs(f0))
    step = 1.0
    for _ in range(config.line_search_max_iters):
        candidate = x + step * dx
        if constraints.is_strictly_feasible(candidate):
            if _barrier_value(constraints, c, candidate, t) <= f0 + config.line_search_alpha * step * slope + slack:
                return step
        step *= config.line_search_beta
    return None


def _center(constraints: ConstraintSet, c, x, t, config):
    for k in range(config.newton_max_iters):
        gradient, hessian = _barrier_derivatives(constraints, c, x, t)
        dx = _newton_direction(gradient, hessian)
        decrement = -(gradient @ dx)
        if decrement / 2 <= config.newton_tol:
            return x, k
        step = _backtracking_line_search(constraints, c, x, t, dx, -decrement, config)
        if step is None:
            # Within roundoff of the center
            if decrement / 2 <= config.stall_tolerance:
                logger.debug("Line search stalled near the center", extra={"t_barrier": t, "decrement": decrement})
                return x, k
            diagnostics = {"t_barrier": t, "newton_step": k, "decrement": float(decrement),
                           "max_residual": float(np.max(constraints.values(x)))}
            err = "Backtracking line search found no acceptable step: " + str(diagnostics)
            raise LineSearchStallException(err, diagnostics)
        x = x + step * dx
    diagnostics = {"t_barrier": t, "newton_steps": config.newton_max_iters}
    err = "Centering did not converge within " + str(config.newton_max_iters) + " Newton steps"
    raise MaxNewtonItersException(err, diagnostics)


def solve_subproblem(constraints: ConstraintSet, start, config) -> OptimizeResult:
    """Solves ``maximize s`` over ``constraints`` from a strictly feasible ``start``.

    Parameters
    ----------
    constraints : ConstraintSet
        The convex subproblem.
    start : array_like
        Strictly feasible flat vector laid out by ``constraints.layout``.
    config : SolverConfig
        Barrier, Newton and line search settings.

    Returns
    -------
    OptimizeResult
        ``x`` (strictly feasible), ``fun`` (the maximized ``s``), ``gap`` (duality
        gap bound), ``nit`` (Newton steps) and ``t_barrier``.
    """
    x = np.array(start, dtype=float)
    if not constraints.is_strictly_feasible(x):
        with np.errstate(all="ignore"):
            values = constraints.values(x) if constraints.in_domain(x) else np.array([np.nan])
        diagnostics = {"max_residual": float(np.max(values))}
        err = "Subproblem start is not strictly feasible: " + str(diagnostics)
        raise InfeasibleStartException(err, diagnostics)

    c = constraints.objective_gradient
    k = constraints.num_barrier_terms
    t = config.barrier_t0
    newton_steps = 0
    while True:
        x, steps = _center(constraints, c, x, t, config)
        newton_steps += steps
        logger.debug("Barrier stage centered", extra={"t_barrier": t, "newton_steps": steps, "s": float(-c @ x)})
        if k / t <= config.gap_target * k:
            break
        t *= config.barrier_mu
    return OptimizeResult(x=x, fun=float(-c @ x), gap=k / t, nit=newton_steps, t_barrier=t,
                          success=True, status=0, message="Duality gap target reached")


class InnerSolverException(Exception):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics if diagnostics is not None else {}


class InfeasibleStartException(InnerSolverException):
    pass


class LineSearchStallException(InnerSolverException):
    pass


class MaxNewtonItersException(InnerSolverException):
    pass
