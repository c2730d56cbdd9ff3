"""Log-domain form of the max-min throughput problem.

Durations and powers enter as ``u = log t`` and ``v = log p``; the objective is
the logarithm of each user's throughput, which is concave in ``(u, v)``. The
localization constraints stay nonconvex in ``v`` and are replaced, around an
expansion point, by a convex majorant that touches them there.
"""
import numpy as np
from scipy.special import expit

from wpIsac.model.Residual import VariableLayout, Residual, AffineResidual, ConstraintSet
from wpIsac.model.Scenario import Scenario
from wpIsac.model.Sensing import SensingTables, fn_value

LN2 = np.log(2.0)
T0_FLOOR = 1e-9


def _rate_terms(v_m, h_0m, sigma2):
    """``z = v + log(h/sigma2)``, ``ell = ln(1 + e^z)`` and ``q = e^z / (1 + e^z)``."""
    z = np.asarray(v_m, dtype=float) + np.log(h_0m / sigma2)
    return z, np.logaddexp(0.0, z), expit(z)


def log_throughput(u_m, v_m, h_0m, sigma2, bandwidth):
    """Natural log of ``e^u W log2(1 + (h/sigma2) e^v)``."""
    _, ell, _ = _rate_terms(v_m, h_0m, sigma2)
    return u_m + np.log(bandwidth) + np.log(ell / LN2)


def log_throughput_derivs(u_m, v_m, h_0m, sigma2, bandwidth):
    """Gradient and Hessian of :func:`log_throughput` in ``(u, v)``.

    Only the ``(v, v)`` Hessian entry is nonzero, and it is never positive.
    """
    z, ell, q = _rate_terms(v_m, h_0m, sigma2)
    z, ell, q = float(z), float(ell), float(q)
    # (1-q) ell - q = (1-q)(ell - x); the second form avoids cancellation for x <= 1
    if z > 0:
        curvature = (1 - q) * ell - q
    else:
        x = np.exp(z)
        curvature = (1 - q) * (np.log1p(x) - x)
    gradient = np.array([1.0, q / ell])
    hessian = np.array([[0.0, 0.0], [0.0, q * curvature / ell ** 2]])
    return gradient, hessian


def ftilde(v, tables: SensingTables, eta, p0, n):
    """Localization constraint of target ``n`` in log-powers."""
    return fn_value(np.exp(v), tables, eta, p0, n)


def ftilde_derivs(v, tables: SensingTables, eta, p0, n):
    p = np.exp(np.asarray(v, dtype=float))
    beta = tables.beta[:, :, n]
    diagonal = tables.alpha[:, n] * p - eta * p * (beta @ p) - eta * p0 * tables.phi[:, n] * p
    hessian = np.diag(diagonal) - eta * np.outer(p, p) * beta
    return diagonal, hessian


def ftilde_linearized(v, v_r, tables: SensingTables, eta, p0, n):
    """Convex majorant of :func:`ftilde` around ``v_r``.

    The exponential terms entering with a negative sign are replaced by their
    tangent planes at ``v_r``; the convex terms are kept exact.
    """
    v = np.asarray(v, dtype=float)
    p_r = np.exp(np.asarray(v_r, dtype=float))
    d = v - np.log(p_r)
    beta_p = tables.beta[:, :, n] @ p_r
    mu = tables.mu[n] * (p0 / tables.p0)
    return (tables.alpha[:, n] @ np.exp(v) + mu
            - 0.5 * eta * (p_r @ beta_p)
            - eta * ((p_r * beta_p) @ d)
            - eta * p0 * ((tables.phi[:, n] * p_r) @ (1 + d)))


def ftilde_linearized_derivs(v, v_r, tables: SensingTables, eta, p0, n):
    p = np.exp(np.asarray(v, dtype=float))
    p_r = np.exp(np.asarray(v_r, dtype=float))
    slope = eta * p_r * (tables.beta[:, :, n] @ p_r) + eta * p0 * tables.phi[:, n] * p_r
    return tables.alpha[:, n] * p - slope, np.diag(tables.alpha[:, n] * p)


class BudgetResidual(Residual):
    """``t0 + sum_m e^{u_m} - T_max``."""

    def __init__(self, layout: VariableLayout, t_max):
        super().__init__(layout, "budget", "time_budget")
        self.t_max = t_max

    def value(self, x) -> float:
        t0, u, _, _ = self.layout.split(x)
        return float(t0 + np.sum(np.exp(u)) - self.t_max)

    def gradient(self, x) -> np.ndarray:
        _, u, _, _ = self.layout.split(x)
        g = np.zeros(self.layout.dim)
        g[self.layout.t0_index] = 1.0
        np.add.at(g, self.layout.u_index, np.exp(u))
        return g

    def hessian(self, x) -> np.ndarray:
        _, u, _, _ = self.layout.split(x)
        diagonal = np.zeros(self.layout.dim)
        np.add.at(diagonal, self.layout.u_index, np.exp(u))
        return np.diag(diagonal)


class EnergyResidual(Residual):
    """``u_m + v_m - log(zeta_m h_0m p0) - log t0``."""

    def __init__(self, layout: VariableLayout, m, zeta_m, h_0m, p0):
        super().__init__(layout, "energy", "energy_causality_" + str(m + 1))
        self.m = m
        self.log_rate = np.log(zeta_m * h_0m * p0)

    def value(self, x) -> float:
        t0, u, v, _ = self.layout.split(x)
        return float(u[self.m] + v[self.m] - self.log_rate - np.log(t0))

    def gradient(self, x) -> np.ndarray:
        g = np.zeros(self.layout.dim)
        g[self.layout.t0_index] = -1.0 / x[self.layout.t0_index]
        g[self.layout.u_index[self.m]] += 1.0
        if self.layout.has_power_variables:
            g[self.layout.v_index[self.m]] += 1.0
        return g

    def hessian(self, x) -> np.ndarray:
        H = np.zeros((self.layout.dim, self.layout.dim))
        H[self.layout.t0_index, self.layout.t0_index] = 1.0 / x[self.layout.t0_index] ** 2
        return H


class EpigraphResidual(Residual):
    """``s - log R_m(u_m, v_m)``."""

    def __init__(self, layout: VariableLayout, m, h_0m, sigma2, bandwidth):
        super().__init__(layout, "epigraph", "epigraph_" + str(m + 1))
        self.m = m
        self.h_0m = h_0m
        self.sigma2 = sigma2
        self.bandwidth = bandwidth

    def value(self, x) -> float:
        _, u, v, s = self.layout.split(x)
        return float(s - log_throughput(u[self.m], v[self.m], self.h_0m, self.sigma2, self.bandwidth))

    def _local(self, x):
        _, u, v, _ = self.layout.split(x)
        return log_throughput_derivs(u[self.m], v[self.m], self.h_0m, self.sigma2, self.bandwidth)

    def gradient(self, x) -> np.ndarray:
        local, _ = self._local(x)
        g = np.zeros(self.layout.dim)
        g[self.layout.s_index] = 1.0
        g[self.layout.u_index[self.m]] -= local[0]
        if self.layout.has_power_variables:
            g[self.layout.v_index[self.m]] -= local[1]
        return g

    def hessian(self, x) -> np.ndarray:
        H = np.zeros((self.layout.dim, self.layout.dim))
        if self.layout.has_power_variables:
            _, local = self._local(x)
            k = self.layout.v_index[self.m]
            H[k, k] = -local[1, 1]
        return H


class LinearizedCrbResidual(Residual):
    """Convex majorant of the localization constraint of one target."""

    def __init__(self, layout: VariableLayout, tables: SensingTables, eta, p0, n, v_r):
        super().__init__(layout, "crb", "crb_" + str(n + 1))
        if not layout.has_power_variables:
            err = "Localization residuals need power variables"
            raise ValueError(err)
        self.tables = tables
        self.eta = eta
        self.p0 = p0
        self.n = n
        self.v_r = np.array(v_r, dtype=float)

    def value(self, x) -> float:
        return float(ftilde_linearized(x[self.layout.v_index], self.v_r, self.tables, self.eta, self.p0, self.n))

    def gradient(self, x) -> np.ndarray:
        local, _ = ftilde_linearized_derivs(x[self.layout.v_index], self.v_r, self.tables, self.eta, self.p0, self.n)
        g = np.zeros(self.layout.dim)
        g[self.layout.v_index] = local
        return g

    def hessian(self, x) -> np.ndarray:
        _, local = ftilde_linearized_derivs(x[self.layout.v_index], self.v_r, self.tables, self.eta, self.p0, self.n)
        H = np.zeros((self.layout.dim, self.layout.dim))
        H[np.ix_(self.layout.v_index, self.layout.v_index)] = local
        return H


def build_subproblem(scenario: Scenario, tables: SensingTables, v_r, layout: VariableLayout = None,
                     t0_floor=T0_FLOOR, energy=True, crb=True) -> ConstraintSet:
    """Convex subproblem around the log-powers ``v_r``.

    Residual order: M epigraph, the time budget, M power caps, M energy
    causality and N localization residuals. Power caps and localization
    residuals only exist when the layout carries power variables.
    """
    params = scenario.params
    m_users = scenario.num_users
    layout = layout if layout is not None else VariableLayout.independent(m_users)
    residuals = [EpigraphResidual(layout, m, scenario.h_bs_user[m], params.sigma2, params.bandwidth)
                 for m in range(m_users)]
    residuals.append(BudgetResidual(layout, params.t_max))
    if layout.has_power_variables:
        for m in range(m_users):
            a = np.zeros(layout.dim)
            a[layout.v_index[m]] = 1.0
            residuals.append(AffineResidual(layout, "cap", "power_cap_" + str(m + 1), a, -np.log(params.p_max)))
    if energy:
        residuals.extend(EnergyResidual(layout, m, params.zeta[m], scenario.h_bs_user[m], params.p0)
                         for m in range(m_users))
    if crb and layout.has_power_variables:
        residuals.extend(LinearizedCrbResidual(layout, tables, params.eta, params.p0, n, v_r)
                         for n in range(scenario.num_targets))
    floor = np.zeros(layout.dim)
    floor[layout.t0_index] = -1.0
    bounds = [AffineResidual(layout, "floor", "t0_floor", floor, t0_floor)]
    return ConstraintSet(layout, residuals, bounds)
