"""Forward passes, action selection and the learn-then-prune agent lifecycle.

This is the readable reference path. ``sbnn.fast`` runs the same arithmetic
in compiled loops and is checked against it bit for bit.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .condensation import SCC, ActivationSchedule, random_order_schedule, remove_cycles, topological_schedule
from .envs import Environment, scatter_inputs
from .network import SBNN, Network
from .plasticity import HebbianConfig, hebbian_step
from .pruning import PruneEvent, global_magnitude_prune

PRE_PRUNE = "pre_prune"
POST_PRUNE = "post_prune"


def incoming_lists(net: Network) -> list[list[int]]:
    """Active in-edges per node, canonical (ascending source) order."""
    incoming: list[list[int]] = [[] for _ in range(net.n_nodes)]
    for e in np.flatnonzero(net.active):
        incoming[int(net.dst[e])].append(int(e))
    return incoming


def condensed_schedule(net: Network, mode: str = SCC) -> ActivationSchedule:
    nodes = range(net.n_nodes)
    condensed = remove_cycles(nodes, net.active_edges(), mode)
    return topological_schedule(condensed, keep=set(net.hidden_nodes))


@dataclass
class ActivationState:
    values: np.ndarray
    rng: np.random.RandomState
    phase: str = PRE_PRUNE

    @classmethod
    def fresh(cls, n_nodes: int, seed: int, phase: str = PRE_PRUNE) -> ActivationState:
        return cls(np.zeros(n_nodes), np.random.RandomState(seed), phase)

    def reset(self) -> None:
        self.values[:] = 0.0


def forward(
    net: Network,
    schedule: ActivationSchedule,
    inputs: Sequence[float],
    state: ActivationState,
    incoming: list[list[int]] | None = None,
) -> np.ndarray:
    """One pass: inputs, then hidden nodes in schedule order, then outputs.

    Every node reads the shared buffer, so hidden nodes not yet visited in
    this pass contribute their value from the previous pass.
    """
    if len(inputs) != net.n_inputs:
        raise ValueError(f"expected {net.n_inputs} inputs, got {len(inputs)}")
    incoming = incoming if incoming is not None else incoming_lists(net)
    a = state.values
    for i, x in enumerate(inputs):
        a[i] = math.tanh(x)

    def activate(node: int) -> None:
        total = 0.0
        for e in incoming[node]:
            total += net.weights[e] * a[net.src[e]]
        a[node] = math.tanh(total)

    for node in schedule.expand(state.rng):
        activate(node)
    for node in net.output_nodes:
        activate(node)
    return a[net.n_inputs + net.n_hidden :].copy()


def select_action(outputs: Sequence[float], allowed: Sequence[int]) -> int:
    """Allowed output index with the largest activation; ties go to the smaller index."""
    if not allowed:
        raise ValueError("no allowed outputs")
    return min(allowed, key=lambda i: (-outputs[i], i))


@dataclass
class Agent:
    """A network together with where it is in its lifecycle.

    SBNN agents start plastic with a random-order schedule; :meth:`prune`
    freezes the weights and switches to the condensed schedule. FFNN agents
    are never plastic.
    """

    net: Network
    hebbian: HebbianConfig
    schedule: ActivationSchedule
    phase: str = PRE_PRUNE
    cycle_mode: str = SCC
    prune_event: PruneEvent | None = None
    _incoming: list[list[int]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._incoming = incoming_lists(self.net)

    @classmethod
    def sbnn(cls, net: Network, eta: float, cycle_mode: str = SCC) -> Agent:
        return cls(net, HebbianConfig(eta, True), random_order_schedule(net.hidden_nodes), PRE_PRUNE, cycle_mode)

    @classmethod
    def frozen(cls, net: Network, cycle_mode: str = SCC) -> Agent:
        return cls(net, HebbianConfig(0.0, False), condensed_schedule(net, cycle_mode), POST_PRUNE, cycle_mode)

    @property
    def plastic(self) -> bool:
        return self.hebbian.enabled

    def prune(self, rate: float, episode_index: int) -> PruneEvent:
        self.net, event = global_magnitude_prune(self.net, rate, episode_index)
        self._incoming = incoming_lists(self.net)
        self.schedule = condensed_schedule(self.net, self.cycle_mode)
        self.hebbian.freeze()
        self.phase = POST_PRUNE
        self.prune_event = event
        return event

    def act(self, inputs: Sequence[float], state: ActivationState, allowed: Sequence[int]) -> int:
        outputs = forward(self.net, self.schedule, inputs, state, self._incoming)
        return select_action(outputs, allowed)


@dataclass(frozen=True)
class StepRecord:
    observation: np.ndarray
    action: int
    reward: float
    terminated: bool


def episode_step(
    agent: Agent, env: Environment, state: ActivationState, observation: np.ndarray
) -> StepRecord:
    """Forward pass, action, environment step, then a Hebbian update on the
    activations of that pass when the agent is still plastic."""
    inputs = scatter_inputs(observation, env.input_index, agent.net.n_inputs)
    chosen = agent.act(inputs, state, env.allowed_outputs)
    action = env.allowed_outputs.index(chosen)
    obs, reward, done = env.step(action)
    if agent.plastic:
        hebbian_step(agent.net, state.values, agent.hebbian)
    return StepRecord(obs, action, reward, done)


def run_episode(agent: Agent, env: Environment, seed: int, trace: list | None = None) -> float:
    """One episode from a fresh activation buffer; the episode RNG draws the
    initial condition first, then the per-pass activation orders."""
    state = ActivationState.fresh(agent.net.n_nodes, seed, agent.phase)
    obs = env.reset(state.rng)
    total = 0.0
    t = 0
    done = False
    while not done:
        prev = obs
        rec = episode_step(agent, env, state, obs)
        total += rec.reward
        if trace is not None:
            trace.append((t, prev, rec.action, rec.reward))
        obs, done = rec.observation, rec.terminated
        t += 1
    return total


def run_lifecycle(
    agent: Agent,
    env: Environment,
    seeds: Sequence[int],
    prune_rate: float,
    prune_time: int | None,
) -> list[float]:
    """Episodes ``1..len(seeds)``; an SBNN agent is pruned after episode
    ``prune_time`` completes."""
    rewards = []
    for episode, seed in enumerate(seeds, start=1):
        rewards.append(run_episode(agent, env, int(seed)))
        if agent.net.kind == SBNN and agent.plastic and episode == prune_time:
            agent.prune(prune_rate, episode)
    return rewards
