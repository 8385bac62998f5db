import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subspace_perturb.graph import (
    Graph,
    GraphError,
    build_constraint_matrices,
    complete_graph,
    default_radius_sq,
    from_edges,
    generate_geometric_graph,
    path_graph,
)


def test_seeded_geometric_graph_is_connected(graph20):
    assert graph20.n == 20
    assert graph20.m > 0
    assert graph20.coords is not None and len(graph20.coords) == 20
    assert default_radius_sq(20) == pytest.approx(2 * np.log(20) / 20)
    assert default_radius_sq(20) == pytest.approx(0.2996, abs=1e-4)


def test_large_radius_forces_complete_graph():
    g2 = generate_geometric_graph(2, radius_sq=3.0, seed=5)
    assert g2.edges == ((0, 1),)
    assert list(g2.degrees) == [1, 1]
    g3 = generate_geometric_graph(3, radius_sq=3.0, seed=11)
    assert g3.m == 3


def test_edges_respect_radius(graph20):
    xy = np.asarray(graph20.coords)
    r2 = default_radius_sq(20)
    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1)
    expected = {(i, j) for i in range(20) for j in range(i + 1, 20) if d2[i, j] < r2}
    assert set(graph20.edges) == expected


def test_regeneration_is_byte_identical():
    a = generate_geometric_graph(20, seed=7).to_json()
    b = generate_geometric_graph(20, seed=7).to_json()
    assert a == b
    assert generate_geometric_graph(20, seed=8).to_json() != a


def test_tiny_radius_gives_up():
    with pytest.raises(GraphError):
        generate_geometric_graph(10, radius_sq=1e-6, seed=0, max_attempts=5)


@pytest.mark.parametrize("n, edges", [
    (3, [(0, 0), (0, 1), (1, 2)]),
    (4, [(0, 1), (2, 3)]),
    (3, [(0, 5), (1, 2)]),
])
def test_invalid_graphs_rejected(n, edges):
    with pytest.raises(GraphError):
        from_edges(n, edges)


def test_duplicate_edges_rejected_on_direct_construction():
    with pytest.raises(GraphError):
        Graph(n=3, edges=((0, 1), (0, 1), (1, 2)))
    # the convenience constructor normalizes instead
    assert from_edges(3, [(1, 0), (0, 1), (2, 1)]).edges == ((0, 1), (1, 2))


def test_json_round_trip(graph20, tmp_path):
    p = tmp_path / "g.json"
    graph20.save(p)
    again = Graph.load(p)
    assert again == graph20
    doc = json.loads(p.read_text())
    assert set(doc) >= {"n", "edges", "coords"}


def test_neighbors_consistent_with_edges(graph20):
    for i, nb in enumerate(graph20.neighbors):
        assert list(nb) == sorted(nb)
        for j in nb:
            assert (min(i, j), max(i, j)) in graph20.edges


def test_single_edge_matrices(path2):
    cm = build_constraint_matrices(path2, 1)
    np.testing.assert_array_equal(cm.B, [[1, -1]])
    np.testing.assert_array_equal(cm.C, [[1, 0], [0, -1]])
    np.testing.assert_array_equal(cm.PC, [[0, -1], [1, 0]])


def test_triangle_incidence_rank(triangle):
    cm = build_constraint_matrices(triangle, 1)
    s = np.linalg.svd(cm.B, compute_uv=False)
    assert int((s > 1e-10 * s[0]).sum()) == 2


def test_block_structure(triangle):
    c1 = build_constraint_matrices(triangle, 1)
    c2 = build_constraint_matrices(triangle, 2)
    for name in ("B", "C", "M", "W", "Bplus", "Bminus"):
        np.testing.assert_array_equal(getattr(c2, name), np.kron(getattr(c1, name), np.eye(2)))


def _check_identities(cm):
    m, u = cm.graph.m, cm.u
    np.testing.assert_array_equal(cm.C + cm.P @ cm.C, np.vstack([cm.B, cm.B]))
    np.testing.assert_array_equal(cm.P @ cm.P, np.eye(2 * m * u))
    np.testing.assert_array_equal(cm.M[: m * u], cm.C[: m * u])
    np.testing.assert_array_equal(cm.M[m * u:], -cm.C[m * u:])
    np.testing.assert_array_equal(cm.W, np.vstack([-np.eye(m * u), -np.eye(m * u)]))
    assert np.all((cm.W == -1).sum(axis=0) == 2)
    np.testing.assert_array_equal(cm.Bplus + cm.Bminus, cm.B)
    assert (cm.Bplus >= 0).all() and (cm.Bminus <= 0).all()
    assert not cm.b.any() and not cm.d.any()
    for e, (i, j) in enumerate(cm.graph.edges):
        row = cm.B[e * u:(e + 1) * u]
        np.testing.assert_array_equal(row[:, i * u:(i + 1) * u], np.eye(u))
        np.testing.assert_array_equal(row[:, j * u:(j + 1) * u], -np.eye(u))
    # each edge row sums to zero (B 1 = 0) and rank is (n - 1) u
    assert not cm.B.sum(axis=1).any()
    assert np.linalg.matrix_rank(cm.B) == (cm.graph.n - 1) * u


def test_constraint_identities_geometric(graph20):
    _check_identities(build_constraint_matrices(graph20, 1))
    _check_identities(build_constraint_matrices(graph20, 2))


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 8))
    # random spanning tree plus extra edges
    edges = set()
    for v in range(1, n):
        edges.add((draw(st.integers(0, v - 1)), v))
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=10))
    for a, b in extra:
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return from_edges(n, sorted(edges))


@settings(max_examples=40, deadline=None)
@given(connected_graphs(), st.integers(1, 3))
def test_identities_hold_on_random_graphs(g, u):
    _check_identities(build_constraint_matrices(g, u))


def test_apply_P_matches_matrix(graph20, rng):
    cm = build_constraint_matrices(graph20, 2)
    v = rng.standard_normal(cm.P.shape[0])
    np.testing.assert_array_equal(cm.apply_P(v), cm.P @ v)


def test_complete_and_path_helpers():
    assert complete_graph(5).m == 10
    assert path_graph(5).edges == ((0, 1), (1, 2), (2, 3), (3, 4))
