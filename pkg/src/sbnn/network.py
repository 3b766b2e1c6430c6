"""Network topologies for the self-building network and the layered baseline.

Nodes are numbered globally: inputs ``0..I-1``, hidden ``I..I+H-1``, outputs
``I+H..I+H+O-1``. Connections are kept as parallel numpy arrays sorted by
``(src, dst)``; that order is also the genome order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np


class NodeKind(str, Enum):
    INPUT = "input"
    HIDDEN = "hidden"
    OUTPUT = "output"
    FAKE = "fake"


@dataclass(frozen=True)
class NodeId:
    index: int
    kind: NodeKind


@dataclass(frozen=True)
class Connection:
    src: NodeId
    dst: NodeId
    weight: float
    abcd: tuple[float, float, float, float]
    active: bool


class DimensionError(ValueError):
    pass


class GenomeLengthError(ValueError):
    pass


SBNN = "sbnn"
FFNN = "ffnn"


@dataclass
class Network:
    """Dense connection arrays plus the layer sizes they were built from."""

    kind: str
    n_inputs: int
    n_hidden: int
    n_outputs: int
    src: np.ndarray
    dst: np.ndarray
    weights: np.ndarray
    abcd: np.ndarray
    active: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.n_inputs + self.n_hidden + self.n_outputs

    @property
    def n_connections(self) -> int:
        return len(self.src)

    @property
    def input_nodes(self) -> range:
        return range(self.n_inputs)

    @property
    def hidden_nodes(self) -> range:
        return range(self.n_inputs, self.n_inputs + self.n_hidden)

    @property
    def output_nodes(self) -> range:
        return range(self.n_inputs + self.n_hidden, self.n_nodes)

    def node(self, index: int) -> NodeId:
        if 0 <= index < self.n_inputs:
            return NodeId(index, NodeKind.INPUT)
        if index < self.n_inputs + self.n_hidden:
            return NodeId(index, NodeKind.HIDDEN)
        if index < self.n_nodes:
            return NodeId(index, NodeKind.OUTPUT)
        raise IndexError(f"node {index} out of range for {self.n_nodes} nodes")

    @property
    def connections(self) -> list[Connection]:
        return [
            Connection(
                src=self.node(int(s)),
                dst=self.node(int(d)),
                weight=float(w),
                abcd=tuple(float(x) for x in r),
                active=bool(a),
            )
            for s, d, w, r, a in zip(self.src, self.dst, self.weights, self.abcd, self.active)
        ]

    def active_edges(self) -> list[tuple[int, int]]:
        return [(int(s), int(d)) for s, d, a in zip(self.src, self.dst, self.active) if a]

    def copy(self) -> Network:
        return Network(
            self.kind,
            self.n_inputs,
            self.n_hidden,
            self.n_outputs,
            self.src.copy(),
            self.dst.copy(),
            self.weights.copy(),
            self.abcd.copy(),
            self.active.copy(),
        )


def sbnn_connection_count(n_inputs: int, n_hidden: int, n_outputs: int) -> int:
    """Closed-form candidate count H^2 + H(I+O) + IO.

    The H^2 term counts hidden self-loops; pass ``self_loops=True`` to
    :func:`build_sbnn_topology` for a topology whose size matches it.
    """
    return n_hidden**2 + n_hidden * (n_inputs + n_outputs) + n_inputs * n_outputs


def ffnn_connection_count(n_inputs: int, n_hidden: int, n_outputs: int) -> int:
    return n_inputs * n_hidden + n_hidden * n_outputs


def _from_pairs(kind: str, i: int, h: int, o: int, pairs: list[tuple[int, int]]) -> Network:
    pairs.sort()
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    n = len(pairs)
    return Network(
        kind=kind,
        n_inputs=i,
        n_hidden=h,
        n_outputs=o,
        src=arr[:, 0].copy(),
        dst=arr[:, 1].copy(),
        weights=np.zeros(n),
        abcd=np.zeros((n, 4)),
        active=np.ones(n, dtype=bool),
    )


def build_sbnn_topology(
    n_inputs: int, n_hidden: int, n_outputs: int, self_loops: bool = False
) -> Network:
    """Dense candidate topology: every input feeds every hidden and output node,
    hidden nodes are fully interconnected and feed every output.
    All weights start at zero.

    Hidden self-loops are left out unless ``self_loops`` is set, in which case
    the size equals :func:`sbnn_connection_count` exactly.
    """
    if n_inputs < 1 or n_outputs < 1 or n_hidden < 0:
        raise DimensionError(f"invalid dimensions I={n_inputs} H={n_hidden} O={n_outputs}")
    inputs = range(n_inputs)
    hidden = range(n_inputs, n_inputs + n_hidden)
    outputs = range(n_inputs + n_hidden, n_inputs + n_hidden + n_outputs)
    pairs = [(s, d) for s in inputs for d in (*hidden, *outputs)]
    pairs += [(s, d) for s in hidden for d in hidden if self_loops or s != d]
    pairs += [(s, d) for s in hidden for d in outputs]
    return _from_pairs(SBNN, n_inputs, n_hidden, n_outputs, pairs)


def build_ffnn_topology(n_inputs: int, n_hidden: int, n_outputs: int) -> Network:
    """One hidden layer, no biases."""
    if n_inputs < 1 or n_outputs < 1 or n_hidden < 1:
        raise DimensionError(f"invalid dimensions I={n_inputs} H={n_hidden} O={n_outputs}")
    hidden = range(n_inputs, n_inputs + n_hidden)
    outputs = range(n_inputs + n_hidden, n_inputs + n_hidden + n_outputs)
    pairs = [(s, d) for s in range(n_inputs) for d in hidden]
    pairs += [(s, d) for s in hidden for d in outputs]
    return _from_pairs(FFNN, n_inputs, n_hidden, n_outputs, pairs)


def build_topology(
    kind: str, n_inputs: int, n_hidden: int, n_outputs: int, self_loops: bool = False
) -> Network:
    if kind == SBNN:
        return build_sbnn_topology(n_inputs, n_hidden, n_outputs, self_loops)
    if kind == FFNN:
        return build_ffnn_topology(n_inputs, n_hidden, n_outputs)
    raise ValueError(f"unknown network kind {kind!r}")


def network_from_edges(
    n_inputs: int,
    n_hidden: int,
    n_outputs: int,
    edges,
    weights=None,
    kind: str = SBNN,
) -> Network:
    """Hand-built network over explicit ``(src, dst)`` pairs, all active.

    ``weights`` maps each pair to its weight (default 1.0).
    """
    n = n_inputs + n_hidden + n_outputs
    pairs = sorted({(int(s), int(d)) for s, d in edges})
    for s, d in pairs:
        if not (0 <= s < n and 0 <= d < n):
            raise DimensionError(f"edge {(s, d)} outside {n} nodes")
    net = _from_pairs(kind, n_inputs, n_hidden, n_outputs, list(pairs))
    if weights is None:
        net.weights = np.ones(len(pairs))
    else:
        net.weights = np.array([float(weights[p]) for p in pairs])
    return net


def genome_length(net: Network) -> int:
    # sbnn evolves four rule coefficients per connection, ffnn the weights themselves
    return 4 * net.n_connections if net.kind == SBNN else net.n_connections


def apply_genome(net: Network, genome: np.ndarray) -> Network:
    genome = np.asarray(genome, dtype=float)
    expected = genome_length(net)
    if genome.shape != (expected,):
        raise GenomeLengthError(f"genome has shape {genome.shape}, expected ({expected},)")
    out = net.copy()
    if net.kind == SBNN:
        out.abcd = genome.reshape(-1, 4).copy()
        out.weights = np.zeros(net.n_connections)
    else:
        out.weights = genome.copy()
    return out


def extract_genome(net: Network) -> np.ndarray:
    if net.kind == SBNN:
        return net.abcd.reshape(-1).copy()
    return net.weights.copy()


# -- serialization ---------------------------------------------------------


def network_to_dict(net: Network, schedule: Any = None) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "kind": net.kind,
        "I": net.n_inputs,
        "H": net.n_hidden,
        "O": net.n_outputs,
        "connections": [
            {
                "src": int(s),
                "dst": int(d),
                "weight": float(w),
                "abcd": [float(x) for x in r],
                "active": bool(a),
            }
            for s, d, w, r, a in zip(net.src, net.dst, net.weights, net.abcd, net.active)
        ],
    }
    if schedule is not None:
        doc["schedule"] = schedule
    return doc


def network_from_dict(doc: dict[str, Any]) -> Network:
    try:
        kind = doc["kind"]
        i, h, o = int(doc["I"]), int(doc["H"]), int(doc["O"])
        conns = doc["connections"]
    except KeyError as exc:
        raise ValueError(f"network document missing field {exc}") from None
    pairs = [(int(c["src"]), int(c["dst"])) for c in conns]
    full = build_topology(kind, i, h, o, self_loops=any(s == d for s, d in pairs))
    # hand-built networks may carry a subset of the full topology
    if pairs != sorted(set(pairs)) or not set(pairs) <= set(zip(full.src.tolist(), full.dst.tolist())):
        raise ValueError("connections must be a canonically ordered subset of the topology")
    net = _from_pairs(kind, i, h, o, pairs)
    net.weights = np.array([float(c["weight"]) for c in conns])
    net.abcd = np.array([[float(x) for x in c["abcd"]] for c in conns]).reshape(-1, 4)
    net.active = np.array([bool(c["active"]) for c in conns], dtype=bool)
    return net


def save_network(net: Network, path: str | Path, schedule: Any = None) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net, schedule), indent=1))


def load_network(path: str | Path) -> Network:
    return network_from_dict(json.loads(Path(path).read_text()))
