from dataclasses import dataclass

import numpy as np

from wpIsac.model.Scenario import Scenario, harvested_energy
from wpIsac.model.Sensing import SensingTables, fim, fn_value


@dataclass(frozen=True, eq=False)
class Allocation:
    """Power transfer duration ``t0``, user durations ``t`` and powers ``p``."""
    t0: float
    t: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t", np.array(self.t, dtype=float, ndmin=1))
        object.__setattr__(self, "p", np.array(self.p, dtype=float, ndmin=1))

    def to_dict(self) -> dict:
        return {"t0": self.t0, "t": self.t.tolist(), "p": self.p.tolist()}

    def is_feasible(self, scenario: Scenario, tables: SensingTables, tol=1e-6) -> bool:
        return max(audit_allocation(scenario, tables, self).values()) <= tol


@dataclass(frozen=True, eq=False)
class LogPoint:
    """Allocation with ``u = log t`` and ``v = log p``; ``t0`` stays in seconds."""
    t0: float
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "u", np.array(self.u, dtype=float, ndmin=1))
        object.__setattr__(self, "v", np.array(self.v, dtype=float, ndmin=1))


def to_log_domain(alloc: Allocation) -> LogPoint:
    if alloc.t0 <= 0 or np.any(alloc.t <= 0) or np.any(alloc.p <= 0):
        err = "Log-domain transform needs strictly positive durations and powers, got " + str(alloc.to_dict())
        raise DomainException(err)
    return LogPoint(t0=alloc.t0, u=np.log(alloc.t), v=np.log(alloc.p))


def from_log_domain(point: LogPoint) -> Allocation:
    return Allocation(t0=point.t0, t=np.exp(point.u), p=np.exp(point.v))


def audit_allocation(scenario: Scenario, tables: SensingTables, alloc: Allocation) -> dict:
    """Normalized residuals of every natural-domain constraint; feasible when all are <= 0.

    Each entry is the worst violation of its family divided by the natural scale
    of that constraint (time budget, power cap, harvested energy, information).
    """
    params = scenario.params
    energy = harvested_energy(alloc.t0, params.p0, np.asarray(params.zeta), scenario.h_bs_user)
    crb = []
    for n in range(scenario.num_targets):
        information = fim(alloc.p, params.p0, tables, n)
        scale = max(information.A + information.B, np.finfo(float).tiny)
        crb.append(fn_value(alloc.p, tables, params.eta, params.p0, n) / scale)
    return {
        "positivity": float(max(-alloc.t0 / params.t_max, -np.min(alloc.t) / params.t_max,
                                -np.min(alloc.p) / params.p_max)),
        "time_budget": float((alloc.t0 + np.sum(alloc.t) - params.t_max) / params.t_max),
        "power_cap": float(np.max(alloc.p - params.p_max) / params.p_max),
        "energy_causality": float(np.max((alloc.t * alloc.p - energy) / np.maximum(energy, np.finfo(float).tiny))),
        "crb": float(max(crb)),
    }


class DomainException(Exception):
    pass
