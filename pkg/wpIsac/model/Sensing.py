import json
import math
from dataclasses import dataclass

import numpy as np

from wpIsac.model.Scenario import Scenario, DegenerateGeometryException

BISTATIC = "bistatic"
MONOSTATIC = "monostatic"

# Singular FIMs carry no finite bound
SINGULAR = math.inf


@dataclass(frozen=True)
class Fim2x2:
    """Fisher information of one target position, ``[[A, C], [C, B]]``."""
    A: float
    B: float
    C: float

    @property
    def determinant(self) -> float:
        return self.A * self.B - self.C ** 2

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.A, self.C], [self.C, self.B]])

    def pd_tolerance(self) -> float:
        return 1e-12 * max(1.0, self.A * self.B)

    def is_positive_definite(self) -> bool:
        return self.A > 0 and self.B > 0 and self.determinant > self.pd_tolerance()


@dataclass(frozen=True, eq=False)
class SensingTables:
    """Geometry and coefficient tables of the localization constraints.

    Transmitter-indexed tables (``X``, ``Y``, ``K``) have M+1 rows, row 0 being
    the BS. User-indexed tables (``alpha``, ``phi`` and both axes of ``beta``)
    have M rows, row i holding user i+1. The last axis is always the target.
    ``mu`` was built with ``p0`` and is linear in it.
    """
    X: np.ndarray
    Y: np.ndarray
    K: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    beta: np.ndarray
    phi: np.ndarray
    p0: float

    def to_json(self) -> str:
        document = {name: getattr(self, name).tolist() for name in ("X", "Y", "K", "alpha", "mu", "beta", "phi")}
        document["p0"] = self.p0
        return json.dumps(document, indent=2) + "\n"


def _check_mode(mode):
    if mode not in (BISTATIC, MONOSTATIC):
        err = "Unknown sensing mode \"" + str(mode) + "\", expected \"" + BISTATIC + "\" or \"" + MONOSTATIC + "\""
        raise ValueError(err)


def _distance(a, b):
    d = float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    if d <= 0:
        err = "Target coincides with a sensing endpoint at " + str(list(np.asarray(b, dtype=float)))
        raise DegenerateGeometryException(err)
    return d


def round_trip_distance(tx_pos, bs_pos, target_pos, mode=BISTATIC) -> float:
    _check_mode(mode)
    d_bs = _distance(bs_pos, target_pos)
    if mode == MONOSTATIC:
        return 2 * d_bs
    return _distance(tx_pos, target_pos) + d_bs


def range_gradient(tx_pos, bs_pos, target_pos, mode=BISTATIC) -> np.ndarray:
    """Gradient (X, Y) of the round-trip distance with respect to the target position."""
    _check_mode(mode)
    q = np.asarray(target_pos, dtype=float)
    to_bs = (np.asarray(bs_pos, dtype=float) - q) / _distance(bs_pos, q)
    if mode == MONOSTATIC:
        return -2 * to_bs
    to_tx = (np.asarray(tx_pos, dtype=float) - q) / _distance(tx_pos, q)
    return -to_tx - to_bs


def sensing_coefficient(bandwidth, h_mn, sigma2, c) -> float:
    return 8 * np.pi ** 2 * bandwidth ** 2 * h_mn / (sigma2 * c ** 2)


def build_tables(scenario: Scenario) -> SensingTables:
    """Precomputes every coefficient of the localization constraints from the geometry."""
    params = scenario.params
    m_users, n_targets = scenario.num_users, scenario.num_targets
    transmitters = scenario.transmitter_pos
    X = np.zeros((m_users + 1, n_targets))
    Y = np.zeros((m_users + 1, n_targets))
    K = np.zeros((m_users + 1, n_targets))
    for n, q in enumerate(scenario.target_pos):
        for m, tx in enumerate(transmitters):
            mode = MONOSTATIC if m == 0 else BISTATIC
            X[m, n], Y[m, n] = range_gradient(tx, scenario.bs_pos, q, mode)
            K[m, n] = sensing_coefficient(params.bandwidth, scenario.h_to_target[m, n], params.sigma2, params.c)

    # cross[i, j] = -cross[j, i] exactly, so the squared table is exactly symmetric with a zero diagonal
    cross = X[:, None, :] * Y[None, :, :] - X[None, :, :] * Y[:, None, :]
    pair = K[:, None, :] * K[None, :, :] * cross ** 2
    norms = X ** 2 + Y ** 2
    return SensingTables(X=X, Y=Y, K=K,
                         alpha=K[1:] * norms[1:],
                         mu=params.p0 * K[0] * norms[0],
                         beta=pair[1:, 1:],
                         phi=pair[0, 1:],
                         p0=params.p0)


def fim(p, p0, tables: SensingTables, n) -> Fim2x2:
    weights = np.concatenate([[p0], np.asarray(p, dtype=float)]) * tables.K[:, n]
    X, Y = tables.X[:, n], tables.Y[:, n]
    return Fim2x2(A=float(weights @ X ** 2), B=float(weights @ Y ** 2), C=float(weights @ (X * Y)))


def crb_trace(information: Fim2x2) -> float:
    """Trace of the CRB matrix, or SINGULAR when the FIM is not positive definite."""
    determinant = information.determinant
    if determinant > information.pd_tolerance():
        return (information.A + information.B) / determinant
    return SINGULAR


def fn_value(p, tables: SensingTables, eta, p0, n):
    """Polynomial form of ``A + B - eta (AB - C^2)`` for target ``n``.

    ``p`` may carry leading batch axes, ``(..., M)``.
    """
    p = np.asarray(p, dtype=float)
    mu = tables.mu[n] * (p0 / tables.p0)
    quadratic = np.einsum("...i,ij,...j->...", p, tables.beta[:, :, n], p)
    return p @ tables.alpha[:, n] + mu - 0.5 * eta * quadratic - eta * p0 * (p @ tables.phi[:, n])
