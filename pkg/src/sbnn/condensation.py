"""Cycle removal with fake nodes and hierarchical activation schedules.

Graphs here are plain ``(nodes, edges)`` pairs. Concrete nodes are ints (the
network's global node indices); fake nodes are ``NodeId(i, NodeKind.FAKE)``.
Wherever an ordering is needed, a node is ranked by the smallest concrete
index it contains, which is unique because fake nodes hide disjoint sets.
"""

from __future__ import annotations

import heapq
from collections.abc import Collection, Hashable, Iterable
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from .network import NodeId, NodeKind

Node = Hashable
Edge = tuple[Node, Node]

SCC = "scc"
SIMPLE = "simple"


class CycleDetectedError(ValueError):
    pass


@dataclass
class CondensedGraph:
    nodes: set
    edges: set
    cycle_history: dict[NodeId, frozenset] = field(default_factory=dict)

    def key(self, node: Node) -> int:
        return min(self.flatten(node))

    def flatten(self, node: Node) -> list[int]:
        """Concrete nodes hidden behind ``node`` (itself if concrete)."""
        if isinstance(node, NodeId) and node.kind is NodeKind.FAKE:
            out: list[int] = []
            for member in self.cycle_history[node]:
                out.extend(self.flatten(member))
            return out
        return [node]


def _rank(node: Node, history: dict[NodeId, frozenset]) -> int:
    if isinstance(node, NodeId) and node.kind is NodeKind.FAKE:
        return min(_rank(m, history) for m in history[node])
    return node


def _adjacency(nodes: Iterable[Node], edges: Iterable[Edge]) -> dict[Node, list[Node]]:
    adj: dict[Node, list[Node]] = {n: [] for n in nodes}
    for u, v in edges:
        adj[u].append(v)
    return adj


def strongly_connected_components(
    nodes: Iterable[Node], edges: Iterable[Edge]
) -> list[set]:
    """Tarjan's algorithm, iterative."""
    adj = _adjacency(nodes, edges)
    index: dict[Node, int] = {}
    low: dict[Node, int] = {}
    on_stack: set = set()
    stack: list[Node] = []
    result: list[set] = []
    counter = 0
    for root in adj:
        if root in index:
            continue
        work = [(root, iter(adj[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, successors = work[-1]
            advanced = False
            for succ in successors:
                if succ not in index:
                    index[succ] = low[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, iter(adj[succ])))
                    advanced = True
                    break
                if succ in on_stack:
                    low[node] = min(low[node], index[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                component = set()
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.add(member)
                    if member == node:
                        break
                result.append(component)
    return result


def _shortest_cycle_through(start: Node, adj: dict[Node, list[Node]], within: set, rank) -> set:
    parent: dict[Node, Node] = {}
    frontier = [start]
    seen = {start}
    while frontier:
        nxt = []
        for u in frontier:
            for v in sorted(adj[u], key=rank):
                if v not in within:
                    continue
                if v == start:
                    cycle = {u}
                    while u != start:
                        u = parent[u]
                        cycle.add(u)
                    return cycle
                if v not in seen:
                    seen.add(v)
                    parent[v] = u
                    nxt.append(v)
        frontier = nxt
    return set()


def find_cycle(
    nodes: Collection[Node],
    edges: Collection[Edge],
    mode: str = SCC,
    history: dict[NodeId, frozenset] | None = None,
) -> set:
    """Node set of one cycle, or an empty set for a DAG.

    ``mode="scc"`` returns the whole strongly connected component with the
    lowest-ranked node. ``mode="simple"`` returns a shortest simple cycle
    through that node, exploring successors in rank order.
    """
    history = history or {}
    rank = lambda n: _rank(n, history)  # noqa: E731
    self_loops = {u for u, v in edges if u == v}
    cyclic = [c for c in strongly_connected_components(nodes, edges) if len(c) > 1 or c & self_loops]
    if not cyclic:
        return set()
    component = min(cyclic, key=lambda c: min(rank(n) for n in c))
    if mode == SCC:
        return component
    if mode != SIMPLE:
        raise ValueError(f"unknown cycle mode {mode!r}")
    start = min(component, key=rank)
    if start in self_loops:
        return {start}
    return _shortest_cycle_through(start, _adjacency(nodes, edges), component, rank)


def remove_cycles(
    nodes: Iterable[Node], edges: Iterable[Edge], mode: str = SCC
) -> CondensedGraph:
    """Replace cycles by fake nodes until the graph is acyclic.

    Edges entering (leaving) a replaced set are re-pointed at (from) the new
    fake node; duplicates merge. Fake indices count up from 0 in creation
    order.
    """
    g_nodes = set(nodes)
    g_edges = set(edges)
    history: dict[NodeId, frozenset] = {}
    i = 0
    while cycle := find_cycle(g_nodes, g_edges, mode, history):
        fake = NodeId(i, NodeKind.FAKE)
        incoming = {(u, v) for u, v in g_edges if u not in cycle and v in cycle}
        outgoing = {(u, v) for u, v in g_edges if u in cycle and v not in cycle}
        g_edges = {(u, v) for u, v in g_edges if u not in cycle and v not in cycle}
        g_nodes -= cycle
        g_nodes.add(fake)
        history[fake] = frozenset(cycle)
        g_edges |= {(u, fake) for u, _ in incoming}
        g_edges |= {(fake, v) for _, v in outgoing}
        i += 1
    return CondensedGraph(g_nodes, g_edges, history)


# -- schedules -------------------------------------------------------------


@dataclass(frozen=True)
class Group:
    """Nodes activated in a fresh random order on every pass."""

    members: tuple["Entry", ...]


Entry = Union[int, Group]


def shuffled(items: Iterable[Any], rng: np.random.RandomState) -> list[Any]:
    """Fisher-Yates driven by ``rng.random_sample()``, one draw per swap."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.random_sample() * (i + 1))
        out[i], out[j] = out[j], out[i]
    return out


@dataclass(frozen=True)
class ActivationSchedule:
    entries: tuple[Entry, ...]

    def expand(self, rng: np.random.RandomState) -> list[int]:
        """Concrete activation order for one pass.

        A group is shuffled when reached; a nested group is fully resolved
        before the enclosing group continues.
        """
        order: list[int] = []

        def visit(entry: Entry) -> None:
            if isinstance(entry, Group):
                for member in shuffled(entry.members, rng):
                    visit(member)
            else:
                order.append(entry)

        for entry in self.entries:
            visit(entry)
        return order

    def flatten(self) -> list[int]:
        out: list[int] = []

        def visit(entry: Entry) -> None:
            if isinstance(entry, Group):
                for member in entry.members:
                    visit(member)
            else:
                out.append(entry)

        for entry in self.entries:
            visit(entry)
        return out

    def to_json(self) -> list[Any]:
        def enc(entry: Entry) -> Any:
            return {"group": [enc(m) for m in entry.members]} if isinstance(entry, Group) else entry

        return [enc(e) for e in self.entries]

    @classmethod
    def from_json(cls, doc: list[Any]) -> ActivationSchedule:
        def dec(item: Any) -> Entry:
            return Group(tuple(dec(m) for m in item["group"])) if isinstance(item, dict) else int(item)

        return cls(tuple(dec(x) for x in doc))


def random_order_schedule(hidden: Iterable[int]) -> ActivationSchedule:
    """Schedule used before pruning: every hidden node in one shuffled group."""
    hidden = tuple(hidden)
    return ActivationSchedule((Group(hidden),) if hidden else ())


def topological_order(condensed: CondensedGraph) -> list[Node]:
    """Kahn's algorithm; ready nodes leave in ascending rank."""
    indeg = {n: 0 for n in condensed.nodes}
    adj = _adjacency(condensed.nodes, condensed.edges)
    for _, v in condensed.edges:
        indeg[v] += 1
    rank = condensed.key
    heap = [(rank(n), n) for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order: list[Node] = []
    while heap:
        _, node = heapq.heappop(heap)
        order.append(node)
        for succ in adj[node]:
            indeg[succ] -= 1
            if indeg[succ] == 0:
                heapq.heappush(heap, (rank(succ), succ))
    if len(order) != len(condensed.nodes):
        raise CycleDetectedError("graph still contains a cycle")
    return order


def topological_schedule(
    condensed: CondensedGraph, keep: Collection[int] | None = None
) -> ActivationSchedule:
    """Activation schedule over the condensed DAG.

    Only concrete nodes in ``keep`` (all of them when ``None``) and fake nodes
    are scheduled; inputs and outputs are handled by the caller.
    """

    def entry(node: Node) -> Entry:
        if isinstance(node, NodeId) and node.kind is NodeKind.FAKE:
            members = sorted(condensed.cycle_history[node], key=condensed.key)
            return Group(tuple(entry(m) for m in members))
        return node

    def wanted(node: Node) -> bool:
        if isinstance(node, NodeId) and node.kind is NodeKind.FAKE:
            return True
        return keep is None or node in keep

    return ActivationSchedule(
        tuple(entry(n) for n in topological_order(condensed) if wanted(n))
    )
