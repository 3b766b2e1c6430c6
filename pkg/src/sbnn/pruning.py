"""Global magnitude pruning and post-pruning structure analysis."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .condensation import find_cycle
from .network import Network


@dataclass(frozen=True)
class PruneEvent:
    episode_index: int
    pruning_rate: float
    threshold: float
    removed: int


def prune_count(rate: float, n_connections: int) -> int:
    """floor(rate/100 * n), computed exactly."""
    if not 0 <= rate <= 100:
        raise ValueError(f"pruning rate must be in [0, 100], got {rate}")
    return int(Fraction(rate) * n_connections // 100)


def global_magnitude_prune(
    net: Network, rate: float, episode_index: int = 0
) -> tuple[Network, PruneEvent]:
    """Deactivate the ``floor(rate*C/100)`` connections of smallest |w|.

    The count is taken over all C connections, so connections that are
    already inactive count toward it (re-pruning at the same rate is a
    no-op). Ties go to the earlier connection in canonical order. The
    recorded threshold is the largest pruned magnitude, 0 if nothing goes.
    """
    out = net.copy()
    target = prune_count(rate, net.n_connections)
    already = int((~net.active).sum())
    k = max(0, target - already)
    candidates = np.flatnonzero(net.active)
    # stable sort keeps canonical order among equal magnitudes
    order = candidates[np.argsort(np.abs(net.weights[candidates]), kind="stable")]
    victims = order[:k]
    out.active[victims] = False
    threshold = float(np.abs(net.weights[victims]).max()) if k else 0.0
    return out, PruneEvent(episode_index, float(rate), threshold, int(k))


def _reach(start: set[int], adj: dict[int, list[int]]) -> set[int]:
    seen = set(start)
    stack = list(start)
    while stack:
        u = stack.pop()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def working_mask(net: Network) -> np.ndarray:
    """Boolean mask of working connections.

    Repeatedly stripping edges into sinks and out of sources leaves closed
    loops that touch no input or output untouched, so the fixed point is
    computed directly: an active edge u->v works iff u is reachable from an
    input and an output is reachable from v.
    """
    fwd: dict[int, list[int]] = {}
    bwd: dict[int, list[int]] = {}
    for s, d in net.active_edges():
        fwd.setdefault(s, []).append(d)
        bwd.setdefault(d, []).append(s)
    from_inputs = _reach(set(net.input_nodes), fwd)
    to_outputs = _reach(set(net.output_nodes), bwd)
    return np.array(
        [
            bool(a) and int(s) in from_inputs and int(d) in to_outputs
            for s, d, a in zip(net.src, net.dst, net.active)
        ],
        dtype=bool,
    )


def working_connections(net: Network) -> list[tuple[int, int]]:
    mask = working_mask(net)
    return [(int(s), int(d)) for s, d in zip(net.src[mask], net.dst[mask])]


def working_network(net: Network) -> Network:
    out = net.copy()
    out.active = working_mask(net)
    return out


@dataclass(frozen=True)
class StructureClass:
    name: str
    depth: int = 0

    def __str__(self) -> str:
        return f"{self.name}({self.depth})" if self.name == "multi_layer" else self.name


ZERO_LAYER = StructureClass("zero_layer")
SINGLE_LAYER = StructureClass("single_layer")
MIXED = StructureClass("mixed")


def multi_layer(depth: int) -> StructureClass:
    return StructureClass("multi_layer", depth)


def classify_structure(net: Network) -> StructureClass:
    """Shape of the working subnetwork.

    zero_layer: no hidden node carries a working connection.
    single_layer: working hidden nodes exist but none feeds another.
    multi_layer(d): acyclic, and the longest input->output path crosses d >= 2 hidden nodes.
    mixed: working hidden nodes form a cycle.
    """
    edges = working_connections(net)
    hidden = set(net.hidden_nodes)
    used = {n for e in edges for n in e if n in hidden}
    if not used:
        return ZERO_LAYER
    hh = [(s, d) for s, d in edges if s in hidden and d in hidden]
    if not hh:
        return SINGLE_LAYER
    if find_cycle(used, hh):
        return MIXED
    # longest chain of hidden nodes, memoised over the acyclic hidden subgraph
    succ: dict[int, list[int]] = {}
    for s, d in hh:
        succ.setdefault(s, []).append(d)
    memo: dict[int, int] = {}

    def depth(n: int) -> int:
        if n not in memo:
            memo[n] = 1 + max((depth(m) for m in succ.get(n, ())), default=0)
        return memo[n]

    return multi_layer(max(depth(n) for n in used))
