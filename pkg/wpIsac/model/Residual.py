from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class VariableLayout:
    """Where each decision variable lives in the flat solver vector.

    The vector is ``[t0, durations..., log-powers..., s]``. Durations are either
    one per user or a single shared entry; log-powers are either one per user or
    held fixed outside the vector.
    """
    num_users: int
    tied_durations: bool = False
    fixed_log_powers: np.ndarray = None

    # CONSTRUCTORS
    @classmethod
    def independent(cls, num_users):
        return cls(num_users=num_users)

    @classmethod
    def equal_time(cls, num_users):
        return cls(num_users=num_users, tied_durations=True)

    @classmethod
    def fixed_power(cls, num_users, log_powers):
        log_powers = np.array(log_powers, dtype=float, ndmin=1)
        if log_powers.shape != (num_users,):
            err = "Expected " + str(num_users) + " fixed log-powers, got shape " + str(log_powers.shape)
            raise ValueError(err)
        return cls(num_users=num_users, fixed_log_powers=log_powers)

    # GETTERS
    @property
    def t0_index(self) -> int:
        return 0

    @property
    def num_durations(self) -> int:
        return 1 if self.tied_durations else self.num_users

    @property
    def u_index(self) -> np.ndarray:
        """Vector position of each user's log-duration (repeated when tied)."""
        if self.tied_durations:
            return np.ones(self.num_users, dtype=int)
        return np.arange(1, self.num_users + 1)

    @property
    def has_power_variables(self) -> bool:
        return self.fixed_log_powers is None

    @property
    def v_index(self):
        if not self.has_power_variables:
            return None
        return np.arange(1 + self.num_durations, 1 + self.num_durations + self.num_users)

    @property
    def s_index(self) -> int:
        return self.dim - 1

    @property
    def dim(self) -> int:
        return 2 + self.num_durations + (self.num_users if self.has_power_variables else 0)

    def split(self, x):
        """``(t0, u, v, s)`` with ``u`` and ``v`` always of length M."""
        x = np.asarray(x, dtype=float)
        v = x[self.v_index] if self.has_power_variables else self.fixed_log_powers
        return x[self.t0_index], x[self.u_index], v, x[self.s_index]

    def pack(self, t0, u, v, s) -> np.ndarray:
        u = np.array(u, dtype=float, ndmin=1)
        x = np.zeros(self.dim)
        x[self.t0_index] = t0
        if self.tied_durations:
            if np.ptp(u) > 0:
                err = "Tied durations need equal log-durations, got " + str(u)
                raise ValueError(err)
            x[1] = u[0]
        else:
            x[self.u_index] = u
        if self.has_power_variables:
            x[self.v_index] = v
        x[self.s_index] = s
        return x


class Residual(ABC):
    """One smooth convex constraint ``g(x) <= 0`` over a flat solver vector."""

    # CONSTRUCTOR
    def __init__(self, layout: VariableLayout, kind: str, name: str):
        self.layout = layout
        self.kind = kind
        self.name = name

    # INTERFACE
    @abstractmethod
    def value(self, x) -> float:
        pass

    @abstractmethod
    def gradient(self, x) -> np.ndarray:
        pass

    @abstractmethod
    def hessian(self, x) -> np.ndarray:
        pass

    def evaluate(self, x):
        return self.value(x), self.gradient(x), self.hessian(x)

    def __repr__(self):
        return type(self).__name__ + "(" + self.name + ")"


class AffineResidual(Residual):
    """``a @ x + b``."""

    def __init__(self, layout: VariableLayout, kind: str, name: str, a, b: float):
        super().__init__(layout, kind, name)
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)

    def value(self, x) -> float:
        return float(self.a @ x + self.b)

    def gradient(self, x) -> np.ndarray:
        return self.a.copy()

    def hessian(self, x) -> np.ndarray:
        return np.zeros((self.layout.dim, self.layout.dim))


class ConstraintSet:
    """Epigraph problem ``maximize s`` subject to convex residuals.

    ``residuals`` are the constraints proper; ``bounds`` are simple variable
    bounds (the ``t0`` floor) that also enter the barrier.
    """

    def __init__(self, layout: VariableLayout, residuals: list, bounds: list = None):
        self.layout = layout
        self.residuals = list(residuals)
        self.bounds = list(bounds) if bounds is not None else []

    def __len__(self):
        return len(self.residuals)

    @property
    def barrier_terms(self) -> list:
        return self.residuals + self.bounds

    @property
    def num_barrier_terms(self) -> int:
        return len(self.barrier_terms)

    @property
    def objective_gradient(self) -> np.ndarray:
        """Gradient of the minimized objective ``-s``."""
        c = np.zeros(self.layout.dim)
        c[self.layout.s_index] = -1.0
        return c

    def objective(self, x) -> float:
        return float(self.objective_gradient @ x)

    def counts(self) -> dict:
        out = {}
        for residual in self.residuals:
            out[residual.kind] = out.get(residual.kind, 0) + 1
        return out

    def values(self, x) -> np.ndarray:
        return np.array([term.value(x) for term in self.barrier_terms])

    def evaluate(self, x):
        """Values ``(k,)``, gradients ``(k, n)`` and Hessians ``(k, n, n)`` of every barrier term."""
        values, gradients, hessians = zip(*(term.evaluate(x) for term in self.barrier_terms))
        return np.array(values), np.array(gradients), np.array(hessians)

    def in_domain(self, x) -> bool:
        return bool(np.all(np.isfinite(x)) and x[self.layout.t0_index] > 0)

    def is_strictly_feasible(self, x) -> bool:
        if not self.in_domain(x):
            return False
        with np.errstate(over="ignore", invalid="ignore"):
            values = self.values(x)
        return bool(np.all(np.isfinite(values)) and np.all(values < 0))
