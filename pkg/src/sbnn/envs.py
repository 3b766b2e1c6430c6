"""Classic-control tasks (cart-pole, mountain car) and input/output remapping.

The dynamics are plain float functions so the compiled evaluator can jit the
very same source.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

# cart-pole constants (classic-control definitions)
GRAVITY = 9.8
MASS_CART = 1.0
MASS_POLE = 0.1
TOTAL_MASS = MASS_CART + MASS_POLE
HALF_LENGTH = 0.5
POLE_MASS_LENGTH = MASS_POLE * HALF_LENGTH
FORCE_MAG = 10.0
TAU = 0.02
THETA_LIMIT = 12 * 2 * math.pi / 360
X_LIMIT = 2.4

# mountain car constants
MC_MIN_POSITION = -1.2
MC_MAX_POSITION = 0.6
MC_MAX_SPEED = 0.07
MC_GOAL_POSITION = 0.5
MC_FORCE = 0.001
MC_GRAVITY = 0.0025

CARTPOLE = "cartpole"
MOUNTAINCAR = "mountaincar"


class InvalidActionError(ValueError):
    pass


@dataclass(frozen=True)
class EnvironmentSpec:
    name: str
    observation_dim: int
    action_count: int
    max_steps: int
    solve_threshold: float


CARTPOLE_SPEC = EnvironmentSpec(CARTPOLE, 4, 2, 500, 475.0)
MOUNTAINCAR_SPEC = EnvironmentSpec(MOUNTAINCAR, 2, 3, 200, -110.0)


def cartpole_dynamics(x, x_dot, theta, theta_dot, action):
    """One explicit Euler step; ``action`` 0 pushes left, 1 right."""
    force = FORCE_MAG if action == 1 else -FORCE_MAG
    costheta = math.cos(theta)
    sintheta = math.sin(theta)
    temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sintheta) / TOTAL_MASS
    thetaacc = (GRAVITY * sintheta - costheta * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * costheta * costheta / TOTAL_MASS)
    )
    xacc = temp - POLE_MASS_LENGTH * thetaacc * costheta / TOTAL_MASS
    x = x + TAU * x_dot
    x_dot = x_dot + TAU * xacc
    theta = theta + TAU * theta_dot
    theta_dot = theta_dot + TAU * thetaacc
    return x, x_dot, theta, theta_dot


def cartpole_failed(x, theta):
    return x < -X_LIMIT or x > X_LIMIT or theta < -THETA_LIMIT or theta > THETA_LIMIT


def mountaincar_dynamics(position, velocity, action):
    velocity = velocity + (action - 1) * MC_FORCE + math.cos(3 * position) * (-MC_GRAVITY)
    velocity = min(max(velocity, -MC_MAX_SPEED), MC_MAX_SPEED)
    position = position + velocity
    position = min(max(position, MC_MIN_POSITION), MC_MAX_POSITION)
    if position == MC_MIN_POSITION and velocity < 0:
        velocity = 0.0
    return position, velocity


@dataclass(frozen=True)
class CartPoleState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float
    t: int = 0

    @property
    def observation(self) -> np.ndarray:
        return np.array([self.x, self.x_dot, self.theta, self.theta_dot])


@dataclass(frozen=True)
class MountainCarState:
    position: float
    velocity: float
    t: int = 0

    @property
    def observation(self) -> np.ndarray:
        return np.array([self.position, self.velocity])


def cartpole_reset(rng: np.random.RandomState) -> CartPoleState:
    x, x_dot, theta, theta_dot = (-0.05 + 0.1 * rng.random_sample() for _ in range(4))
    return CartPoleState(x, x_dot, theta, theta_dot)


def cartpole_step(state: CartPoleState, action: int):
    """Returns ``(state, observation, reward, terminated)``.

    The step that tips the pole still earns its reward; the episode also ends
    after ``max_steps`` steps.
    """
    if action not in (0, 1):
        raise InvalidActionError(f"cart-pole action must be 0 or 1, got {action!r}")
    x, x_dot, theta, theta_dot = cartpole_dynamics(
        state.x, state.x_dot, state.theta, state.theta_dot, action
    )
    new = CartPoleState(x, x_dot, theta, theta_dot, state.t + 1)
    done = cartpole_failed(x, theta) or new.t >= CARTPOLE_SPEC.max_steps
    return new, new.observation, 1.0, done


def mountaincar_reset(rng: np.random.RandomState) -> MountainCarState:
    return MountainCarState(-0.6 + 0.2 * rng.random_sample(), 0.0)


def mountaincar_step(state: MountainCarState, action: int):
    if action not in (0, 1, 2):
        raise InvalidActionError(f"mountain car action must be 0, 1 or 2, got {action!r}")
    position, velocity = mountaincar_dynamics(state.position, state.velocity, action)
    new = MountainCarState(position, velocity, state.t + 1)
    done = position >= MC_GOAL_POSITION or new.t >= MOUNTAINCAR_SPEC.max_steps
    return new, new.observation, -1.0, done


class Environment:
    """Stateful wrapper with the reset/step contract used by agents.

    ``input_index[k]`` is the network input that receives observation
    component ``k``; ``allowed_outputs`` lists the network outputs that
    stand for actions ``0, 1, ...``. Both are identities for a native task.
    """

    spec: EnvironmentSpec

    def __init__(self) -> None:
        self.state = None
        self.input_index: tuple[int, ...] = tuple(range(self.spec.observation_dim))
        self.allowed_outputs: tuple[int, ...] = tuple(range(self.spec.action_count))

    def reset(self, rng: np.random.RandomState) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        raise NotImplementedError


class CartPole(Environment):
    spec = CARTPOLE_SPEC

    def reset(self, rng):
        self.state = cartpole_reset(rng)
        return self.state.observation

    def step(self, action):
        self.state, obs, reward, done = cartpole_step(self.state, action)
        return obs, reward, done


class MountainCar(Environment):
    spec = MOUNTAINCAR_SPEC

    def reset(self, rng):
        self.state = mountaincar_reset(rng)
        return self.state.observation

    def step(self, action):
        self.state, obs, reward, done = mountaincar_step(self.state, action)
        return obs, reward, done


ENVIRONMENTS: dict[str, type[Environment]] = {CARTPOLE: CartPole, MOUNTAINCAR: MountainCar}
ENV_IDS = {CARTPOLE: 0, MOUNTAINCAR: 1}


def make_env(name: str) -> Environment:
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise ValueError(f"unknown task {name!r}; choose from {sorted(ENVIRONMENTS)}") from None


def env_spec(name: str) -> EnvironmentSpec:
    return make_env(name).spec


# -- remapping -------------------------------------------------------------


@dataclass(frozen=True)
class RemapSpec:
    """``input_map[k]``: network input fed by target observation ``k``.
    ``output_map[a]``: network output standing for target action ``a``."""

    input_map: tuple[int, ...]
    output_map: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_map", tuple(int(i) for i in self.input_map))
        object.__setattr__(self, "output_map", tuple(int(i) for i in self.output_map))

    @classmethod
    def identity(cls, spec: EnvironmentSpec) -> RemapSpec:
        return cls(tuple(range(spec.observation_dim)), tuple(range(spec.action_count)))

    @classmethod
    def from_dict(cls, doc: dict) -> RemapSpec:
        return cls(tuple(doc["input_map"]), tuple(doc["output_map"]))

    def to_dict(self) -> dict:
        return {"input_map": list(self.input_map), "output_map": list(self.output_map)}


# Lunar Lander observation: x, y, vx, vy, angle, angular velocity, leg contacts.
# Lunar Lander actions: noop, left engine, main engine, right engine.
LANDER_PRESETS: dict[str, RemapSpec] = {
    CARTPOLE: RemapSpec(input_map=(0, 2, 4, 5), output_map=(1, 3)),
    MOUNTAINCAR: RemapSpec(input_map=(0, 2), output_map=(1, 0, 3)),
}


class RemapError(ValueError):
    pass


@dataclass
class RemappedEnvironment:
    """A target task seen through a network built for a different task."""

    env: Environment
    n_inputs: int
    n_outputs: int
    remap: RemapSpec
    spec: EnvironmentSpec = field(init=False)

    def __post_init__(self) -> None:
        target = self.env.spec
        im, om = self.remap.input_map, self.remap.output_map
        if len(im) != target.observation_dim:
            raise RemapError(f"input_map has {len(im)} slots, task observes {target.observation_dim}")
        if len(set(im)) != len(im):
            raise RemapError("input_map must be injective")
        if any(not 0 <= i < self.n_inputs for i in im):
            raise RemapError(f"input_map index out of range for {self.n_inputs} network inputs")
        if len(om) != target.action_count:
            raise RemapError(f"output_map has {len(om)} entries, task has {target.action_count} actions")
        if len(set(om)) != len(om) or any(not 0 <= o < self.n_outputs for o in om):
            raise RemapError(f"output_map invalid for {self.n_outputs} network outputs")
        self.spec = target

    @property
    def input_index(self) -> tuple[int, ...]:
        return self.remap.input_map

    @property
    def allowed_outputs(self) -> tuple[int, ...]:
        return self.remap.output_map

    def reset(self, rng):
        return self.env.reset(rng)

    def step(self, action):
        return self.env.step(action)


def wrap_remapped(
    n_inputs: int, n_outputs: int, target: Environment | str, remap: RemapSpec
) -> RemappedEnvironment:
    env = make_env(target) if isinstance(target, str) else target
    return RemappedEnvironment(env, n_inputs, n_outputs, remap)


def scatter_inputs(observation: Sequence[float], input_index: Sequence[int], n_inputs: int) -> np.ndarray:
    """Place observation components at their network inputs, zeros elsewhere."""
    out = np.zeros(n_inputs)
    out[list(input_index)] = observation
    return out
