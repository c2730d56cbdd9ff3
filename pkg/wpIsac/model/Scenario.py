import json
from dataclasses import dataclass, fields, asdict, replace as dc_replace
from pathlib import Path

import numpy as np

DEFAULT_SEED = 7
# Node pairs closer than this are redrawn
MIN_SEPARATION = 0.1
RETRY_CAP = 10_000


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of one wireless powered ISAC instance.

    Defaults are the reference simulation setting: 10 users and 10 targets on a
    disc of radius 10 m, p0 = 10 W, P_max = 2 W, T_max = 10 s, sigma2 = -70 dBm,
    eta = 0.05 m^2, W = 1 MHz, zeta = 0.7, kappa = 1e-3, nu = 2.5.
    """
    num_users: int = 10
    num_targets: int = 10
    p0: float = 10.0
    p_max: float = 2.0
    t_max: float = 10.0
    sigma2: float = 1e-10
    bandwidth: float = 1e6
    eta: float = 5e-2
    # A scalar is broadcast to every user
    zeta: tuple = 0.7
    kappa: float = 1e-3
    nu: float = 2.5
    c: float = 3e8
    deploy_radius: float = 10.0
    lambda_th: float = 1e-5

    def __post_init__(self):
        if np.ndim(self.zeta) == 0:
            object.__setattr__(self, "zeta", (float(self.zeta),) * int(self.num_users))
        else:
            object.__setattr__(self, "zeta", tuple(float(z) for z in self.zeta))
        self.validate()

    def validate(self):
        if int(self.num_users) != self.num_users or self.num_users < 1:
            err = "num_users must be a positive integer, got " + str(self.num_users)
            raise InvalidParametersException(err)
        if int(self.num_targets) != self.num_targets or self.num_targets < 1:
            err = "num_targets must be a positive integer, got " + str(self.num_targets)
            raise InvalidParametersException(err)
        for name in ("p0", "p_max", "t_max", "sigma2", "bandwidth", "eta", "kappa", "nu", "c",
                     "deploy_radius", "lambda_th"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                err = "Parameter \"" + name + "\" must be positive and finite, got " + str(value)
                raise InvalidParametersException(err)
        if len(self.zeta) != self.num_users:
            err = "zeta has " + str(len(self.zeta)) + " entries but there are " + str(self.num_users) + " users"
            raise InvalidParametersException(err)
        if any(not (0 < z <= 1) for z in self.zeta):
            err = "Every energy conversion efficiency must lie in (0, 1], got " + str(self.zeta)
            raise InvalidParametersException(err)

    def replace(self, **changes):
        # A uniform zeta follows a change in the number of users
        if "num_users" in changes and "zeta" not in changes and len(set(self.zeta)) == 1:
            changes["zeta"] = self.zeta[0]
        return dc_replace(self, **changes)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["zeta"] = list(self.zeta)
        return out

    @classmethod
    def from_dict(cls, values: dict):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            err = "Unknown system parameters: " + ", ".join(sorted(unknown))
            raise InvalidParametersException(err)
        return cls(**values)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Node geometry, channel gains and parameters of one problem instance.

    Row 0 of ``h_to_target`` is the BS, row m the m-th user (1-based), so the
    table is (M+1) x N. ``h_bs_user`` is used for both the energy transfer and
    the uplink.
    """
    params: SystemParams
    bs_pos: np.ndarray
    user_pos: np.ndarray
    target_pos: np.ndarray
    h_bs_user: np.ndarray
    h_to_target: np.ndarray
    seed: int = 0

    def __post_init__(self):
        for name in ("bs_pos", "user_pos", "target_pos", "h_bs_user", "h_to_target"):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        object.__setattr__(self, "seed", int(self.seed))
        self.validate()

    # GETTERS
    @property
    def num_users(self) -> int:
        return self.params.num_users

    @property
    def num_targets(self) -> int:
        return self.params.num_targets

    @property
    def transmitter_pos(self) -> np.ndarray:
        """BS followed by the users, shape (M+1, 2)."""
        return np.vstack([self.bs_pos[None, :], self.user_pos])

    def validate(self):
        m, n = self.num_users, self.num_targets
        expected = {"bs_pos": (2,), "user_pos": (m, 2), "target_pos": (n, 2), "h_bs_user": (m,),
                    "h_to_target": (m + 1, n)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                err = "Scenario field \"" + name + "\" has shape " + str(getattr(self, name).shape) + \
                      ", expected " + str(shape)
                raise InvalidParametersException(err)
        for name in ("h_bs_user", "h_to_target"):
            gains = getattr(self, name)
            if not np.all(np.isfinite(gains)) or np.any(gains <= 0):
                err = "All channel gains in \"" + name + "\" must be strictly positive and finite"
                raise InvalidParametersException(err)
        distances = np.linalg.norm(self.transmitter_pos[:, None, :] - self.target_pos[None, :, :], axis=-1)
        if np.any(distances <= 0):
            err = "A target coincides with the BS or a user"
            raise InvalidParametersException(err)

    def with_params(self, **changes):
        """Same geometry and fading under changed physical parameters."""
        if changes.get("num_users", self.num_users) != self.num_users or \
                changes.get("num_targets", self.num_targets) != self.num_targets:
            err = "The number of users and targets of an existing scenario cannot be changed"
            raise InvalidParametersException(err)
        return dc_replace(self, params=self.params.replace(**changes))

    # SERIALIZATION
    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "params": self.params.to_dict(),
            "bs_pos": self.bs_pos.tolist(),
            "user_pos": self.user_pos.tolist(),
            "target_pos": self.target_pos.tolist(),
            "h_bs_user": self.h_bs_user.tolist(),
            "h_to_target": self.h_to_target.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, document: dict):
        expected = {"seed", "params", "bs_pos", "user_pos", "target_pos", "h_bs_user", "h_to_target"}
        if set(document) != expected:
            err = "Scenario document must have exactly the fields " + ", ".join(sorted(expected))
            raise InvalidParametersException(err)
        return cls(params=SystemParams.from_dict(document["params"]),
                   bs_pos=document["bs_pos"], user_pos=document["user_pos"],
                   target_pos=document["target_pos"], h_bs_user=document["h_bs_user"],
                   h_to_target=document["h_to_target"], seed=document["seed"])

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())


def channel_gain(d, z, kappa, nu):
    """Path-loss gain ``z * kappa * d**(-nu)``; works elementwise on arrays."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        err = "Channel gain requested for a non-positive distance " + str(d)
        raise DegenerateGeometryException(err)
    gain = np.asarray(z, dtype=float) * kappa * d ** (-nu)
    return float(gain) if gain.ndim == 0 else gain


def harvested_energy(t0, p0, zeta_m, h_0m):
    """Energy a user harvests during the power transfer phase, in joules."""
    return zeta_m * h_0m * t0 * p0


def snr(p_m, h_0m, sigma2):
    return p_m * h_0m / sigma2


def throughput(t_m, p_m, h_0m, sigma2, bandwidth):
    """Bits delivered by a user in ``t_m`` seconds at power ``p_m``."""
    return t_m * bandwidth * np.log1p(snr(p_m, h_0m, sigma2)) / np.log(2.0)


def sample_disc(rng: np.random.Generator, radius: float, size: int) -> np.ndarray:
    """Points uniformly distributed on a disc centred at the origin."""
    draws = rng.random((size, 2))
    r = radius * np.sqrt(draws[:, 0])
    theta = 2 * np.pi * draws[:, 1]
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def rayleigh_power_fading(rng: np.random.Generator, size) -> np.ndarray:
    """Squared magnitude of a unit-power Rayleigh coefficient (unit-mean exponential)."""
    return rng.rayleigh(scale=np.sqrt(0.5), size=size) ** 2


def _place_node(rng, radius, placed):
    for _ in range(RETRY_CAP):
        candidate = sample_disc(rng, radius, 1)[0]
        if np.min(np.linalg.norm(np.asarray(placed) - candidate, axis=1)) >= MIN_SEPARATION:
            return candidate
    err = "Could not place a node at least " + str(MIN_SEPARATION) + " m from the others after " + \
          str(RETRY_CAP) + " draws"
    raise ScenarioGenerationException(err)


def generate_scenario(seed: int, params: SystemParams = None) -> Scenario:
    """Random instance: BS at the origin, users then targets uniform on the disc,
    then Rayleigh power fading for the BS-user links and the (M+1) x N
    transmitter-target table, row-major. Same ``(seed, params)``, same scenario.
    """
    params = params if params is not None else SystemParams()
    rng = np.random.Generator(np.random.PCG64(seed))
    bs_pos = np.zeros(2)
    placed = [bs_pos]
    users = []
    for _ in range(params.num_users):
        users.append(_place_node(rng, params.deploy_radius, placed))
        placed.append(users[-1])
    targets = []
    for _ in range(params.num_targets):
        targets.append(_place_node(rng, params.deploy_radius, placed))
        placed.append(targets[-1])
    user_pos, target_pos = np.array(users), np.array(targets)

    z_bs_user = rayleigh_power_fading(rng, params.num_users)
    z_to_target = rayleigh_power_fading(rng, (params.num_users + 1, params.num_targets))
    transmitters = np.vstack([bs_pos[None, :], user_pos])
    h_bs_user = channel_gain(np.linalg.norm(user_pos - bs_pos, axis=1), z_bs_user, params.kappa, params.nu)
    h_to_target = channel_gain(np.linalg.norm(transmitters[:, None, :] - target_pos[None, :, :], axis=-1),
                               z_to_target, params.kappa, params.nu)
    try:
        return Scenario(params=params, bs_pos=bs_pos, user_pos=user_pos, target_pos=target_pos,
                        h_bs_user=h_bs_user, h_to_target=h_to_target, seed=seed)
    except InvalidParametersException as exc:
        raise ScenarioGenerationException(str(exc)) from exc


def scenario_from_geometry(params: SystemParams, user_pos, target_pos, bs_pos=(0.0, 0.0), fading=None,
                           seed=0) -> Scenario:
    """Hand-placed instance with path-loss gains; ``fading`` is an optional pair
    of multiplicative arrays (BS-user, transmitter-target), unit fading otherwise."""
    bs_pos = np.asarray(bs_pos, dtype=float)
    user_pos = np.atleast_2d(np.asarray(user_pos, dtype=float))
    target_pos = np.atleast_2d(np.asarray(target_pos, dtype=float))
    z_bs_user, z_to_target = fading if fading is not None else (1.0, 1.0)
    transmitters = np.vstack([bs_pos[None, :], user_pos])
    h_bs_user = channel_gain(np.linalg.norm(user_pos - bs_pos, axis=1), z_bs_user, params.kappa, params.nu)
    h_to_target = channel_gain(np.linalg.norm(transmitters[:, None, :] - target_pos[None, :, :], axis=-1),
                               z_to_target, params.kappa, params.nu)
    return Scenario(params=params, bs_pos=bs_pos, user_pos=user_pos, target_pos=target_pos,
                    h_bs_user=np.atleast_1d(h_bs_user), h_to_target=np.atleast_2d(h_to_target), seed=seed)


class InvalidParametersException(Exception):
    pass


class DegenerateGeometryException(Exception):
    pass


class ScenarioGenerationException(Exception):
    pass
