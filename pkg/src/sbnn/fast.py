"""Compiled episode loops.

Runs whole phases (many episodes) of the lifecycle implemented in
``sbnn.engine`` without returning to Python between steps. Arithmetic order,
RNG consumption and tie-breaking mirror the reference path exactly.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from . import envs
from .condensation import ActivationSchedule, Group
from .envs import ENV_IDS
from .network import Network

_cartpole = numba.njit(cache=True)(envs.cartpole_dynamics)
_cartpole_failed = numba.njit(cache=True)(envs.cartpole_failed)
_mountaincar = numba.njit(cache=True)(envs.mountaincar_dynamics)
MC_GOAL = envs.MC_GOAL_POSITION


def compile_schedule(schedule: ActivationSchedule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten a schedule into int arrays.

    ``top`` holds the top-level entries; a value ``v >= 0`` is a node and
    ``v < 0`` refers to group ``-v - 1`` whose entries are
    ``items[ptr[g]:ptr[g+1]]`` in the same encoding.
    """
    groups: list[list[int]] = []

    def enc(entry) -> int:
        if isinstance(entry, Group):
            slot = len(groups)
            groups.append([])
            groups[slot] = [enc(m) for m in entry.members]
            return -slot - 1
        return int(entry)

    top = np.array([enc(e) for e in schedule.entries], dtype=np.int64)
    ptr = np.zeros(len(groups) + 1, dtype=np.int64)
    for g, members in enumerate(groups):
        ptr[g + 1] = ptr[g] + len(members)
    items = np.array([m for members in groups for m in members], dtype=np.int64)
    return top, ptr, items


def incoming_csr(net: Network) -> tuple[np.ndarray, np.ndarray]:
    order = [int(e) for e in np.flatnonzero(net.active)]
    # stable by destination keeps ascending source order inside each node
    order.sort(key=lambda e: int(net.dst[e]))
    ptr = np.zeros(net.n_nodes + 1, dtype=np.int64)
    for e in order:
        ptr[int(net.dst[e]) + 1] += 1
    return np.cumsum(ptr), np.array(order, dtype=np.int64)


@numba.njit(cache=True)
def _expand(top, gptr, gitems, out, stack, buf):
    n = 0
    sp = 0
    for k in range(len(top) - 1, -1, -1):
        stack[sp] = top[k]
        sp += 1
    while sp > 0:
        sp -= 1
        item = stack[sp]
        if item >= 0:
            out[n] = item
            n += 1
            continue
        g = -item - 1
        lo = gptr[g]
        m = gptr[g + 1] - lo
        for i in range(m):
            buf[i] = gitems[lo + i]
        for i in range(m - 1, 0, -1):
            j = int(np.random.random() * (i + 1))
            tmp = buf[i]
            buf[i] = buf[j]
            buf[j] = tmp
        for k in range(m - 1, -1, -1):
            stack[sp] = buf[k]
            sp += 1
    return n


@numba.njit(cache=True)
def _episodes(
    env_id,
    seeds,
    n_in,
    out_start,
    src,
    dst,
    w,
    abcd,
    active,
    in_ptr,
    in_edges,
    top,
    gptr,
    gitems,
    eta,
    plastic,
    input_index,
    allowed,
    max_steps,
    rewards,
):
    n_nodes = len(in_ptr) - 1
    a = np.zeros(n_nodes)
    order = np.empty(n_nodes, dtype=np.int64)
    stack = np.empty(len(top) + len(gitems) + 1, dtype=np.int64)
    buf = np.empty(len(gitems) + 1, dtype=np.int64)
    obs = np.zeros(4)
    n_obs = len(input_index)
    for ep in range(len(seeds)):
        np.random.seed(seeds[ep])
        a[:] = 0.0
        obs[:] = 0.0
        if env_id == 0:
            for k in range(4):
                obs[k] = -0.05 + 0.1 * np.random.random()
        else:
            obs[0] = -0.6 + 0.2 * np.random.random()
        total = 0.0
        for t in range(max_steps):
            for i in range(n_in):
                a[i] = 0.0
            for k in range(n_obs):
                a[input_index[k]] = math.tanh(obs[k])
            n = _expand(top, gptr, gitems, order, stack, buf)
            for q in range(n):
                node = order[q]
                acc = 0.0
                for p in range(in_ptr[node], in_ptr[node + 1]):
                    e = in_edges[p]
                    acc += w[e] * a[src[e]]
                a[node] = math.tanh(acc)
            for node in range(out_start, n_nodes):
                acc = 0.0
                for p in range(in_ptr[node], in_ptr[node + 1]):
                    e = in_edges[p]
                    acc += w[e] * a[src[e]]
                a[node] = math.tanh(acc)
            best = 0
            for k in range(1, len(allowed)):
                va = a[out_start + allowed[k]]
                vb = a[out_start + allowed[best]]
                if va > vb or (va == vb and allowed[k] < allowed[best]):
                    best = k
            if env_id == 0:
                obs[0], obs[1], obs[2], obs[3] = _cartpole(obs[0], obs[1], obs[2], obs[3], best)
                done = _cartpole_failed(obs[0], obs[2])
                total += 1.0
            else:
                obs[0], obs[1] = _mountaincar(obs[0], obs[1], best)
                done = obs[0] >= MC_GOAL
                total -= 1.0
            if plastic:
                for e in range(len(src)):
                    if active[e]:
                        ai = a[src[e]]
                        aj = a[dst[e]]
                        w[e] = w[e] + eta * (
                            abcd[e, 0] * ai + abcd[e, 1] * aj + abcd[e, 2] * ai * aj + abcd[e, 3]
                        )
            if done:
                break
        rewards[ep] = total


def run_episodes(
    net: Network,
    schedule: ActivationSchedule,
    task: str,
    seeds,
    eta: float = 0.0,
    plastic: bool = False,
    input_index=None,
    allowed=None,
) -> np.ndarray:
    """Run one episode per seed and return the episode rewards.

    When ``plastic`` is set, ``net.weights`` is updated in place after every
    pass, and the weights carry over from one episode to the next.
    """
    spec = envs.env_spec(task)
    if input_index is None:
        input_index = range(spec.observation_dim)
    if allowed is None:
        allowed = range(spec.action_count)
    in_ptr, in_edges = incoming_csr(net)
    top, gptr, gitems = compile_schedule(schedule)
    seeds = np.asarray(seeds, dtype=np.uint32).astype(np.int64)
    rewards = np.zeros(len(seeds))
    if not net.weights.flags.c_contiguous:
        net.weights = np.ascontiguousarray(net.weights)
    _episodes(
        ENV_IDS[task],
        seeds,
        net.n_inputs,
        net.n_inputs + net.n_hidden,
        net.src,
        net.dst,
        net.weights,
        np.ascontiguousarray(net.abcd),
        net.active,
        in_ptr,
        in_edges,
        top,
        gptr,
        gitems,
        float(eta),
        bool(plastic),
        np.asarray(input_index, dtype=np.int64),
        np.asarray(allowed, dtype=np.int64),
        spec.max_steps,
        rewards,
    )
    return rewards
