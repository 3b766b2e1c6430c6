import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbnn.network import (
    FFNN,
    SBNN,
    DimensionError,
    GenomeLengthError,
    NodeKind,
    apply_genome,
    build_ffnn_topology,
    build_sbnn_topology,
    extract_genome,
    genome_length,
    load_network,
    network_from_dict,
    network_to_dict,
    save_network,
    sbnn_connection_count,
)


def enumerate_sbnn(i, h, o, self_loops):
    inputs = range(i)
    hidden = range(i, i + h)
    outputs = range(i + h, i + h + o)
    pairs = set(itertools.product(inputs, [*hidden, *outputs]))
    pairs |= {(s, d) for s in hidden for d in hidden if self_loops or s != d}
    pairs |= set(itertools.product(hidden, outputs))
    return sorted(pairs)


def test_sbnn_small_example_counts():
    # I->H 6, I->O 6, H->H 6, H->O 9
    net = build_sbnn_topology(2, 3, 3)
    assert net.n_connections == 27
    # the closed form counts hidden self-loops too
    assert sbnn_connection_count(2, 3, 3) == 30
    assert build_sbnn_topology(2, 3, 3, self_loops=True).n_connections == 30


def test_sbnn_lander_size_matches_reported_count():
    assert sbnn_connection_count(8, 5, 4) == 117
    assert build_sbnn_topology(8, 5, 4, self_loops=True).n_connections == 117
    assert build_sbnn_topology(8, 5, 4).n_connections == 112


def test_sbnn_no_hidden():
    net = build_sbnn_topology(1, 0, 1)
    assert net.n_connections == 1
    assert (net.src[0], net.dst[0]) == (0, 1)


@pytest.mark.parametrize("h", range(0, 13))
@pytest.mark.parametrize("i", range(1, 9))
@pytest.mark.parametrize("o", [1, 2, 5, 8])
def test_sbnn_count_grid(i, h, o):
    with_loops = build_sbnn_topology(i, h, o, self_loops=True)
    assert with_loops.n_connections == h * h + h * (i + o) + i * o
    plain = build_sbnn_topology(i, h, o)
    assert plain.n_connections == h * h + h * (i + o) + i * o - h
    got = list(zip(plain.src.tolist(), plain.dst.tolist()))
    assert got == enumerate_sbnn(i, h, o, self_loops=False)


def test_sbnn_structure():
    net = build_sbnn_topology(2, 3, 3)
    assert np.all(net.weights == 0)
    assert np.all(net.active)
    assert np.all(net.src != net.dst)
    hidden = set(net.hidden_nodes)
    pairs = set(zip(net.src.tolist(), net.dst.tolist()))
    for a, b in itertools.permutations(hidden, 2):
        assert (a, b) in pairs and (b, a) in pairs
    # nothing leaves an output, nothing enters an input
    assert not set(net.src.tolist()) & set(net.output_nodes)
    assert not set(net.dst.tolist()) & set(net.input_nodes)


def test_canonical_order_is_sorted_and_stable():
    a = build_sbnn_topology(3, 4, 2)
    b = build_sbnn_topology(3, 4, 2)
    pairs = list(zip(a.src.tolist(), a.dst.tolist()))
    assert pairs == sorted(pairs)
    assert np.array_equal(a.src, b.src) and np.array_equal(a.dst, b.dst)


@pytest.mark.parametrize("dims,count", [((8, 9, 4), 108), ((1, 1, 1), 2), ((2, 4, 3), 20)])
def test_ffnn_counts(dims, count):
    i, h, o = dims
    net = build_ffnn_topology(i, h, o)
    assert net.n_connections == count
    enumerated = [(s, d) for s in range(i) for d in range(i, i + h)]
    enumerated += [(s, d) for s in range(i, i + h) for d in range(i + h, i + h + o)]
    assert list(zip(net.src.tolist(), net.dst.tolist())) == sorted(enumerated)


@pytest.mark.parametrize("builder,dims", [
    (build_sbnn_topology, (0, 3, 2)),
    (build_sbnn_topology, (2, 3, 0)),
    (build_ffnn_topology, (0, 1, 1)),
    (build_ffnn_topology, (1, 0, 1)),
])
def test_invalid_dimensions(builder, dims):
    with pytest.raises(DimensionError):
        builder(*dims)


def test_genome_length():
    assert genome_length(build_sbnn_topology(2, 3, 3, self_loops=True)) == 120
    assert genome_length(build_sbnn_topology(2, 3, 3)) == 4 * 27
    assert genome_length(build_ffnn_topology(8, 9, 4)) == 108
    assert genome_length(build_sbnn_topology(1, 0, 1)) == 4


def test_apply_genome_sbnn_blocks():
    net = apply_genome(build_sbnn_topology(1, 0, 1), np.array([1.0, 2.0, 3.0, 4.0]))
    assert tuple(net.abcd[0]) == (1.0, 2.0, 3.0, 4.0)
    assert net.weights[0] == 0.0

    net = build_sbnn_topology(2, 2, 2)
    genome = np.arange(genome_length(net), dtype=float)
    net = apply_genome(net, genome)
    for k in range(net.n_connections):
        assert list(net.abcd[k]) == [4 * k, 4 * k + 1, 4 * k + 2, 4 * k + 3]
    assert np.all(net.weights == 0)


def test_apply_genome_zero_rule():
    net = apply_genome(build_sbnn_topology(2, 3, 3), np.zeros(108))
    assert np.all(net.abcd == 0)


def test_apply_genome_ffnn():
    net = apply_genome(build_ffnn_topology(1, 1, 1), [0.5, -0.25])
    assert dict(zip(zip(net.src.tolist(), net.dst.tolist()), net.weights)) == {(0, 1): 0.5, (1, 2): -0.25}


def test_apply_genome_length_mismatch():
    with pytest.raises(GenomeLengthError):
        apply_genome(build_ffnn_topology(1, 1, 1), [1.0])


@settings(max_examples=50, deadline=None)
@given(
    st.sampled_from([SBNN, FFNN]),
    st.integers(1, 4),
    st.integers(1, 4),
    st.integers(1, 4),
    st.integers(0, 2**32 - 1),
)
def test_genome_round_trip(kind, i, h, o, seed):
    net = (build_sbnn_topology if kind == SBNN else build_ffnn_topology)(i, h, o)
    genome = np.random.default_rng(seed).normal(size=genome_length(net))
    assert np.array_equal(extract_genome(apply_genome(net, genome)), genome)


def test_connection_view_kinds():
    net = build_sbnn_topology(1, 1, 1)
    kinds = {(c.src.kind, c.dst.kind) for c in net.connections}
    assert kinds == {
        (NodeKind.INPUT, NodeKind.HIDDEN),
        (NodeKind.INPUT, NodeKind.OUTPUT),
        (NodeKind.HIDDEN, NodeKind.OUTPUT),
    }


def test_json_round_trip_full_precision(tmp_path):
    rng = np.random.default_rng(3)
    net = build_sbnn_topology(2, 3, 2)
    net = apply_genome(net, rng.normal(size=genome_length(net)))
    net.weights = rng.normal(size=net.n_connections) / 3
    net.active[::3] = False
    doc = network_to_dict(net)
    assert list(doc) == ["kind", "I", "H", "O", "connections"]
    assert list(doc["connections"][0]) == ["src", "dst", "weight", "abcd", "active"]
    path = tmp_path / "net.json"
    save_network(net, path, schedule=[2, {"group": [3, 4]}])
    back = load_network(path)
    assert json.loads(path.read_text())["schedule"] == [2, {"group": [3, 4]}]
    for field in ("src", "dst", "weights", "abcd", "active"):
        assert np.array_equal(getattr(back, field), getattr(net, field))


def test_json_self_loop_topology_round_trips():
    net = build_sbnn_topology(1, 2, 1, self_loops=True)
    back = network_from_dict(network_to_dict(net))
    assert back.n_connections == net.n_connections


def test_json_rejects_foreign_connections():
    doc = network_to_dict(build_ffnn_topology(1, 1, 1))
    doc["connections"][0]["dst"] = 2
    with pytest.raises(ValueError):
        network_from_dict(doc)
